"""One-way and repeated-measures ANOVA with a native F-distribution tail.

The timing experiment compares completion times between the snapping ON
and OFF conditions two ways: a one-way ANOVA over per-participant means
(two groups of 13 give df (1, 24)) and a repeated-measures ANOVA on the
participant x condition matrix, which removes between-subject variance
and tests the condition effect against df (k-1, (k-1)(n-1)).

P-values come from the regularized incomplete beta function, evaluated
with the standard continued-fraction expansion (modified Lentz method)
and log-gamma from the math module, so the package needs no statistics
dependency. For F >= 0 with df1, df2 > 0:

    sf(F) = I_x(df2/2, df1/2),  x = df2 / (df2 + df1 * F)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

_BETACF_MAX_ITER = 300
_BETACF_EPS = 3e-16
_BETACF_TINY = 1e-300


class StatsError(Exception):
    """Base class for statistics failures."""


class IncompleteMatrix(StatsError):
    """Repeated-measures input is ragged or contains missing cells."""


@dataclass(frozen=True)
class AnovaResult:
    """F test summary; group_means are in input group/column order."""

    kind: str
    F: float
    df1: int
    df2: int
    p: float
    group_means: tuple[float, ...]


def log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz method."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETACF_TINY:
            d = _BETACF_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETACF_TINY:
            c = _BETACF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise StatsError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0.0 and b > 0.0):
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f_value: float, df1: int, df2: int) -> float:
    """Upper tail P(F >= f_value) of the F distribution."""
    if df1 < 1 or df2 < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got ({df1}, {df2})")
    if math.isinf(f_value):
        return 0.0
    if f_value <= 0.0:
        return 1.0
    x = df2 / (df2 + df1 * f_value)
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """Between-groups F test.

    Needs at least two groups with at least two values each. When the
    within-group variance is exactly zero the statistic degenerates:
    F = inf with p = 0 if the group means differ, F = 0 with p = 1 when
    every value is identical.
    """
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups, got {len(groups)}")
    for i, g in enumerate(groups):
        if len(g) < 2:
            raise ValueError(f"group {i} needs at least 2 values, got {len(g)}")

    k = len(groups)
    n_total = sum(len(g) for g in groups)
    grand = sum(sum(g) for g in groups) / n_total
    means = [_mean(g) for g in groups]

    ss_between = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ss_within = sum(sum((v - m) ** 2 for v in g) for g, m in zip(groups, means))
    df1 = k - 1
    df2 = n_total - k

    if ss_within == 0.0:
        if ss_between == 0.0:
            return AnovaResult("one_way", 0.0, df1, df2, 1.0, tuple(means))
        return AnovaResult("one_way", math.inf, df1, df2, 0.0, tuple(means))

    f_value = (ss_between / df1) / (ss_within / df2)
    return AnovaResult("one_way", f_value, df1, df2, f_sf(f_value, df1, df2), tuple(means))


def repeated_measures_anova(table: Sequence[Sequence[float]]) -> AnovaResult:
    """Within-subjects F test on an n x k participant-by-condition matrix.

    Partitions total variance into condition, subject, and error sums of
    squares; the condition effect is tested on df (k-1, (k-1)(n-1)).
    Raises IncompleteMatrix for ragged rows or non-finite cells.
    """
    n = len(table)
    if n < 2:
        raise ValueError(f"need at least 2 participants, got {n}")
    k = len(table[0])
    if k < 2:
        raise ValueError(f"need at least 2 conditions, got {k}")
    for i, row in enumerate(table):
        if len(row) != k:
            raise IncompleteMatrix(f"row {i} has {len(row)} cells, expected {k}")
        for v in row:
            if not math.isfinite(v):
                raise IncompleteMatrix(f"row {i} contains a non-finite cell")

    grand = sum(sum(row) for row in table) / (n * k)
    col_means = [_mean([row[j] for row in table]) for j in range(k)]
    row_means = [_mean(row) for row in table]

    ss_condition = n * sum((m - grand) ** 2 for m in col_means)
    ss_subject = k * sum((m - grand) ** 2 for m in row_means)
    ss_total = sum((v - grand) ** 2 for row in table for v in row)
    ss_error = ss_total - ss_condition - ss_subject

    df1 = k - 1
    df2 = (k - 1) * (n - 1)
    if ss_error <= 0.0:
        # additive data with no residual noise; the ratio degenerates
        if ss_condition == 0.0:
            return AnovaResult("repeated_measures", 0.0, df1, df2, 1.0, tuple(col_means))
        return AnovaResult("repeated_measures", math.inf, df1, df2, 0.0, tuple(col_means))

    f_value = (ss_condition / df1) / (ss_error / df2)
    return AnovaResult(
        "repeated_measures", f_value, df1, df2, f_sf(f_value, df1, df2), tuple(col_means)
    )
