"""Iris-to-screen gaze calibration.

Maps normalized iris coordinates (u, v) to screen pixels with one
bivariate polynomial per screen axis, fitted by linear least squares
over recorded fixation samples. Degree 3 gives 10 monomial terms per
axis, so a 35-point calibration grid leaves a comfortable margin of
redundancy. Fitting happens on iris coordinates rescaled to [-1, 1]
for conditioning; the stored coefficients are converted back to the
raw iris frame so they can be compared against generating polynomials
directly.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_DEGREE = 3
DEFAULT_MARGIN_FRAC = 0.05

# Widest tolerated mismatch factor between a grid's cols/rows ratio and the
# screen aspect ratio. 7x5 on a 16:9 screen mismatches by 1.27; a 35x1
# strip mismatches by ~20 and is rejected.
ASPECT_TOLERANCE = 4.0

# Design matrices with a condition number above this are treated as rank
# deficient: the sample layout does not constrain the polynomial.
COND_LIMIT = 1e10


class CalibrationError(Exception):
    """Base class for calibration failures."""


class InsufficientSamples(CalibrationError):
    """Fewer samples than polynomial coefficients per axis."""


class DegenerateDesign(CalibrationError):
    """Sample layout leaves the design matrix ill-conditioned."""


class NotAGrid(CalibrationError):
    """Point count has no rows x cols factorization near the screen aspect."""


@dataclass(frozen=True)
class IrisPoint:
    """Normalized iris-center coordinates from the eye tracker."""

    u: float
    v: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError(f"iris coordinates must be finite, got ({self.u}, {self.v})")


@dataclass(frozen=True)
class ScreenPoint:
    """A point in screen pixels."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"screen coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class CalibrationSample:
    """One fixation: where the iris sat while a known target was shown."""

    iris: IrisPoint
    target: ScreenPoint


def basis_size(degree: int) -> int:
    """Number of monomials u^i v^j with i + j <= degree."""
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Exponent pairs (i, j) with i + j <= degree in lexicographic (i, j) order."""
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    return [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]


def monomial_basis(p: IrisPoint, degree: int) -> np.ndarray:
    """Evaluate every monomial u^i v^j at p, ordered like monomial_exponents."""
    out = np.empty(basis_size(degree))
    k = 0
    u_pow = 1.0
    for i in range(degree + 1):
        term = u_pow
        for _ in range(degree + 1 - i):
            out[k] = term
            term *= p.v
            k += 1
        u_pow *= p.u
    return out


@dataclass(frozen=True)
class IrisNormalization:
    """Affine rescale applied to iris coordinates before fitting.

    Maps u to (u - u_center) / u_half so the sample cloud spans [-1, 1]
    per axis. A half-range of zero (all samples share one coordinate)
    degrades to the identity scale; the rank check rejects such designs.
    """

    u_center: float
    u_half: float
    v_center: float
    v_half: float

    @classmethod
    def from_samples(cls, samples: Sequence[CalibrationSample]) -> "IrisNormalization":
        us = [s.iris.u for s in samples]
        vs = [s.iris.v for s in samples]
        u_half = (max(us) - min(us)) / 2.0
        v_half = (max(vs) - min(vs)) / 2.0
        return cls(
            u_center=(max(us) + min(us)) / 2.0,
            u_half=u_half if u_half > 0.0 else 1.0,
            v_center=(max(vs) + min(vs)) / 2.0,
            v_half=v_half if v_half > 0.0 else 1.0,
        )

    def apply(self, p: IrisPoint) -> IrisPoint:
        return IrisPoint(
            (p.u - self.u_center) / self.u_half,
            (p.v - self.v_center) / self.v_half,
        )


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    """Fitted per-axis polynomial coefficients in the raw iris frame.

    coeffs_x[k] multiplies u^i v^j where (i, j) = monomial_exponents(degree)[k];
    map_gaze evaluates x = sum a_ij u^i v^j, y = sum b_ij u^i v^j.
    """

    degree: int
    coeffs_x: np.ndarray
    coeffs_y: np.ndarray
    normalization: IrisNormalization
    residual_rms: float
    fitted_at: float

    def __post_init__(self) -> None:
        m = basis_size(self.degree)
        if len(self.coeffs_x) != m or len(self.coeffs_y) != m:
            raise ValueError(f"expected {m} coefficients per axis for degree {self.degree}")
        if not (math.isfinite(self.residual_rms) and self.residual_rms >= 0.0):
            raise ValueError(f"residual_rms must be finite and >= 0, got {self.residual_rms}")
        for arr in (self.coeffs_x, self.coeffs_y):
            arr.setflags(write=False)

    def predict(self, p: IrisPoint) -> ScreenPoint:
        basis = monomial_basis(p, self.degree)
        return ScreenPoint(float(basis @ self.coeffs_x), float(basis @ self.coeffs_y))


def map_gaze(model: CalibrationModel, p: IrisPoint) -> ScreenPoint:
    """Predict the screen point for an iris sample.

    Pure polynomial evaluation: predictions for iris positions outside the
    calibrated range may fall off-screen and are clamped downstream.
    """
    return model.predict(p)


def _rebase_matrix(degree: int, norm: IrisNormalization) -> np.ndarray:
    """Change of basis from normalized-iris coefficients to raw-iris ones.

    With u_n = a_u * u + b_u, a polynomial sum nc_ij u_n^i v_n^j expands to
    raw coefficients c_pq = sum_{i>=p, j>=q} nc_ij C(i,p) a_u^p b_u^(i-p)
    C(j,q) a_v^q b_v^(j-q). Returns M with c_raw = M @ c_normalized.
    """
    a_u, b_u = 1.0 / norm.u_half, -norm.u_center / norm.u_half
    a_v, b_v = 1.0 / norm.v_half, -norm.v_center / norm.v_half
    exps = monomial_exponents(degree)
    index = {e: k for k, e in enumerate(exps)}
    m = len(exps)
    M = np.zeros((m, m))
    for col, (i, j) in enumerate(exps):
        for p in range(i + 1):
            cu = math.comb(i, p) * a_u**p * b_u ** (i - p)
            for q in range(j + 1):
                cv = math.comb(j, q) * a_v**q * b_v ** (j - q)
                M[index[(p, q)], col] += cu * cv
    return M


def fit_calibration(
    samples: Sequence[CalibrationSample],
    degree: int = DEFAULT_DEGREE,
    fitted_at: float | None = None,
) -> CalibrationModel:
    """Fit per-axis polynomials by least squares (SVD via lstsq).

    Raises InsufficientSamples when there are fewer samples than
    coefficients, and DegenerateDesign when the rescaled design matrix has
    condition number above COND_LIMIT (collinear or collapsed layouts).
    """
    m = basis_size(degree)
    if len(samples) < m:
        raise InsufficientSamples(
            f"degree {degree} needs at least {m} samples, got {len(samples)}"
        )
    norm = IrisNormalization.from_samples(samples)
    design = np.stack([monomial_basis(norm.apply(s.iris), degree) for s in samples])
    singular = np.linalg.svd(design, compute_uv=False)
    if singular[-1] <= 0.0 or singular[0] / singular[-1] > COND_LIMIT:
        cond = math.inf if singular[-1] <= 0.0 else singular[0] / singular[-1]
        raise DegenerateDesign(f"design matrix condition number {cond:.3e} exceeds {COND_LIMIT:.1e}")

    targets_x = np.array([s.target.x for s in samples])
    targets_y = np.array([s.target.y for s in samples])
    coef_nx, *_ = np.linalg.lstsq(design, targets_x, rcond=None)
    coef_ny, *_ = np.linalg.lstsq(design, targets_y, rcond=None)

    rebase = _rebase_matrix(degree, norm)
    coeffs_x = rebase @ coef_nx
    coeffs_y = rebase @ coef_ny

    raw_design = np.stack([monomial_basis(s.iris, degree) for s in samples])
    res_x = raw_design @ coeffs_x - targets_x
    res_y = raw_design @ coeffs_y - targets_y
    rms = math.sqrt((res_x @ res_x + res_y @ res_y) / (2 * len(samples)))

    return CalibrationModel(
        degree=degree,
        coeffs_x=coeffs_x,
        coeffs_y=coeffs_y,
        normalization=norm,
        residual_rms=rms,
        fitted_at=time.time() if fitted_at is None else fitted_at,
    )


def calibration_point_layout(
    n_points: int,
    screen_w: float,
    screen_h: float,
    margin_frac: float = DEFAULT_MARGIN_FRAC,
) -> list[ScreenPoint]:
    """Row-major grid of n_points fixation targets inside the screen margin.

    Picks the rows x cols factorization whose cols/rows ratio best matches
    the screen aspect; raises NotAGrid when even the best factorization
    mismatches by more than ASPECT_TOLERANCE (prime counts on wide screens).
    A single point sits at the screen center.
    """
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    if not (screen_w > 0 and screen_h > 0):
        raise ValueError("screen dimensions must be positive")
    if not 0.0 <= margin_frac < 0.5:
        raise ValueError(f"margin_frac must be in [0, 0.5), got {margin_frac}")

    aspect = screen_w / screen_h
    best: tuple[float, int, int] | None = None
    for rows in range(1, n_points + 1):
        if n_points % rows:
            continue
        cols = n_points // rows
        ratio = cols / rows
        mismatch = max(ratio / aspect, aspect / ratio)
        if best is None or mismatch < best[0]:
            best = (mismatch, rows, cols)
    assert best is not None
    mismatch, rows, cols = best
    if mismatch > ASPECT_TOLERANCE:
        raise NotAGrid(
            f"{n_points} points admit no grid within aspect tolerance "
            f"{ASPECT_TOLERANCE} of {aspect:.2f} (best {cols}x{rows})"
        )

    margin_x = margin_frac * screen_w
    margin_y = margin_frac * screen_h
    xs = [screen_w / 2.0] if cols == 1 else list(np.linspace(margin_x, screen_w - margin_x, cols))
    ys = [screen_h / 2.0] if rows == 1 else list(np.linspace(margin_y, screen_h - margin_y, rows))
    return [ScreenPoint(x, y) for y in ys for x in xs]


def save_model(model: CalibrationModel, path: str) -> None:
    """Write the model as JSON. Floats survive a round trip bit-exactly."""
    payload = {
        "kind": "gaze-calibration-model",
        "degree": model.degree,
        "monomial_order": [list(e) for e in monomial_exponents(model.degree)],
        "normalization": {
            "u_center": model.normalization.u_center,
            "u_half": model.normalization.u_half,
            "v_center": model.normalization.v_center,
            "v_half": model.normalization.v_half,
        },
        "coeffs_x": model.coeffs_x.tolist(),
        "coeffs_y": model.coeffs_y.tolist(),
        "residual_rms": model.residual_rms,
        "fitted_at": model.fitted_at,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path: str) -> CalibrationModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "gaze-calibration-model":
        raise CalibrationError(f"{path} is not a calibration model file")
    degree = int(payload["degree"])
    expected_order = [list(e) for e in monomial_exponents(degree)]
    if payload["monomial_order"] != expected_order:
        raise CalibrationError(f"{path} uses an unsupported monomial order")
    norm = IrisNormalization(**payload["normalization"])
    return CalibrationModel(
        degree=degree,
        coeffs_x=np.array(payload["coeffs_x"]),
        coeffs_y=np.array(payload["coeffs_y"]),
        normalization=norm,
        residual_rms=float(payload["residual_rms"]),
        fitted_at=float(payload["fitted_at"]),
    )
