"""Constant-velocity Kalman smoothing of the calibrated gaze point.

State is [x, y, vx, vy] with position-only measurements. Process noise is
the discrete white-noise-acceleration model per axis, with intensity q:

    Q_axis = q * [[dt^4/4, dt^3/2],
                  [dt^3/2, dt^2  ]]

and isotropic measurement noise R = r * I. Because the transition,
measurement, and noise matrices are all block-diagonal over the two axes
and the state starts with a diagonal covariance, the 4x4 filter decomposes
exactly into two independent 2x2 filters; filter_step runs that scalar
block algebra directly and assembles the full matrices on demand. The
covariance update uses the Joseph form, which preserves positive
semidefiniteness under rounding.

A measurement whose innovation norm exceeds saccade_px is treated as a
saccade landing rather than tracked motion: the predicted velocity is
zeroed and the predicted position variance inflated before the update, so
the filter re-converges to the new fixation in a few samples instead of
overshooting along a stale velocity estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import ScreenPoint

MS_PER_S = 1000.0


class FilterError(Exception):
    """Base class for filter failures."""


class NonMonotonicTime(FilterError):
    """A sample timestamp went backwards."""


@dataclass(frozen=True)
class FilterParams:
    """Tuning constants. Timestamps are milliseconds; dt clamps are seconds.

    q is the process-noise intensity (px^2/s^3), r the measurement-noise
    variance (px^2), p0 the initial covariance scale. dt between samples is
    clamped to [dt_min, dt_max] seconds so bursts and stalls cannot blow up
    the prediction.
    """

    q: float = 50.0
    r: float = 25.0
    p0: float = 1e3
    saccade_px: float = 200.0
    saccade_inflation: float = 10.0
    dt_min: float = 1e-4
    dt_max: float = 0.5

    def __post_init__(self) -> None:
        if not self.q >= 0.0:
            raise ValueError(f"q must be >= 0, got {self.q}")
        if not self.r > 0.0:
            raise ValueError(f"r must be > 0, got {self.r}")
        if not self.p0 > 0.0:
            raise ValueError(f"p0 must be > 0, got {self.p0}")
        if not self.saccade_px > 0.0:
            raise ValueError(f"saccade_px must be > 0, got {self.saccade_px}")
        if not self.saccade_inflation >= 1.0:
            raise ValueError(f"saccade_inflation must be >= 1, got {self.saccade_inflation}")
        if not 0.0 < self.dt_min <= self.dt_max:
            raise ValueError(f"need 0 < dt_min <= dt_max, got [{self.dt_min}, {self.dt_max}]")


@dataclass(frozen=True)
class FilterState:
    """Immutable filter state; filter_step returns a fresh one.

    cov_x and cov_y hold the per-axis 2x2 covariance as (position variance,
    position-velocity covariance, velocity variance). Symmetry is therefore
    structural. x_hat and P assemble the conventional 4-vector and 4x4
    matrix in [x, y, vx, vy] order.
    """

    x: float
    y: float
    vx: float
    vy: float
    cov_x: tuple[float, float, float]
    cov_y: tuple[float, float, float]
    last_t: float
    params: FilterParams

    @property
    def x_hat(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @property
    def P(self) -> np.ndarray:
        full = np.zeros((4, 4))
        full[0, 0], full[0, 2], full[2, 2] = self.cov_x
        full[2, 0] = self.cov_x[1]
        full[1, 1], full[1, 3], full[3, 3] = self.cov_y
        full[3, 1] = self.cov_y[1]
        return full

    @property
    def point(self) -> ScreenPoint:
        return ScreenPoint(self.x, self.y)


def filter_init(z0: ScreenPoint, t0: float, params: FilterParams | None = None) -> FilterState:
    """Start tracking at the first measurement with zero velocity and P = p0 * I."""
    p = params or FilterParams()
    cov = (p.p0, 0.0, p.p0)
    return FilterState(z0.x, z0.y, 0.0, 0.0, cov, cov, t0, p)


def _axis_step(
    pos: float,
    vel: float,
    cov: tuple[float, float, float],
    z: float,
    dt: float,
    q: float,
) -> tuple[float, float, tuple[float, float, float], float]:
    """One predict-update cycle for a single axis; returns the innovation too."""
    p00, p01, p11 = cov

    # predict: x = A x, P = A P A^T + Q with A = [[1, dt], [0, 1]]
    pos_pred = pos + vel * dt
    dt2 = dt * dt
    p00 = p00 + dt * (2.0 * p01 + dt * p11) + q * dt2 * dt2 * 0.25
    p01 = p01 + dt * p11 + q * dt2 * dt * 0.5
    p11 = p11 + q * dt2

    innovation = z - pos_pred
    return pos_pred, vel, (p00, p01, p11), innovation


def _axis_update(
    pos_pred: float,
    vel_pred: float,
    cov: tuple[float, float, float],
    innovation: float,
    r: float,
) -> tuple[float, float, tuple[float, float, float]]:
    """Joseph-form measurement update for a single axis."""
    p00, p01, p11 = cov
    s = p00 + r
    k0 = p00 / s
    k1 = p01 / s

    pos = pos_pred + k0 * innovation
    vel = vel_pred + k1 * innovation

    a = 1.0 - k0
    n00 = a * a * p00 + k0 * k0 * r
    n01 = a * (p01 - k1 * p00) + k0 * k1 * r
    n11 = k1 * k1 * p00 - 2.0 * k1 * p01 + p11 + k1 * k1 * r
    return pos, vel, (n00, n01, n11)


def filter_step(state: FilterState, z: ScreenPoint, t: float) -> tuple[FilterState, ScreenPoint]:
    """Fold one measurement at time t (ms) into the state.

    Raises NonMonotonicTime when t precedes the previous sample. Equal
    timestamps are allowed and use the dt_min clamp.
    """
    if t < state.last_t:
        raise NonMonotonicTime(f"sample at t={t} after state at t={state.last_t}")
    p = state.params
    dt = (t - state.last_t) / MS_PER_S
    if dt < p.dt_min:
        dt = p.dt_min
    elif dt > p.dt_max:
        dt = p.dt_max

    px, vx, cov_x, in_x = _axis_step(state.x, state.vx, state.cov_x, z.x, dt, p.q)
    py, vy, cov_y, in_y = _axis_step(state.y, state.vy, state.cov_y, z.y, dt, p.q)

    if math.hypot(in_x, in_y) > p.saccade_px:
        vx = 0.0
        vy = 0.0
        cov_x = (cov_x[0] * p.saccade_inflation, cov_x[1], cov_x[2])
        cov_y = (cov_y[0] * p.saccade_inflation, cov_y[1], cov_y[2])

    px, vx, cov_x = _axis_update(px, vx, cov_x, in_x, p.r)
    py, vy, cov_y = _axis_update(py, vy, cov_y, in_y, p.r)

    new_state = FilterState(px, py, vx, vy, cov_x, cov_y, t, p)
    return new_state, ScreenPoint(px, py)


def filter_variance_gain(
    params: FilterParams | None = None,
    rate_hz: float = 30.0,
    n_steps: int = 10_000,
    seed: int = 0,
) -> float:
    """Ratio of output to input position variance under white-noise input.

    Feeds zero-mean Gaussian samples with variance r at the given rate and
    pools both axes. Values well below 1 mean the filter is smoothing;
    r -> 0 sends the ratio to 1 because the filter then trusts each sample.
    """
    p = params or FilterParams()
    if not rate_hz > 0:
        raise ValueError(f"rate_hz must be > 0, got {rate_hz}")
    rng = np.random.default_rng(seed)
    zs = rng.normal(0.0, math.sqrt(p.r), size=(n_steps, 2))
    dt_ms = MS_PER_S / rate_hz

    state = filter_init(ScreenPoint(zs[0, 0], zs[0, 1]), 0.0, p)
    outputs = np.empty((n_steps - 1, 2))
    for k in range(1, n_steps):
        state, est = filter_step(state, ScreenPoint(zs[k, 0], zs[k, 1]), k * dt_ms)
        outputs[k - 1] = (est.x, est.y)

    var_in = zs[1:, 0].var() + zs[1:, 1].var()
    var_out = outputs[:, 0].var() + outputs[:, 1].var()
    return float(var_out / var_in)
