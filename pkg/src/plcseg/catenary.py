"""Parametric conductor models fitted per segment in the ZY-plane.

The physical model is the catenary z(y) = a + c*cosh((y - b)/c) with
a, b in meters and c > 0 the vertex parameter; c equals the sag-point
tension divided by the conductor's linear weight density, so a supplied
weight turns the fitted geometry into a tension estimate. For small
sag-to-span ratios the curve collapses to the quadratic
z(y) = a2*y^2 + a1*y + a0, which is what the robust (MSAC) stage fits;
the quadratic also seeds the nonlinear catenary refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CatenaryFitError, DegenerateSampleError

_STEP_TOL = 1e-10
_MAX_ITER = 200
_MAX_DAMPING = 1e15
_FLAT_A2 = 1e-12  # below this |a2| a quadratic is treated as a straight wire


@dataclass(frozen=True)
class QuadraticModel:
    a2: float
    a1: float
    a0: float
    inlier_ids: np.ndarray = field(repr=False)
    rmse: float = 0.0

    def predict(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return self.a2 * y * y + self.a1 * y + self.a0

    @property
    def vertex_y(self) -> float:
        if abs(self.a2) < _FLAT_A2:
            return math.nan
        return -self.a1 / (2.0 * self.a2)

    def to_dict(self) -> dict:
        return {"type": "quadratic", "a2": self.a2, "a1": self.a1,
                "a0": self.a0, "rmse": self.rmse,
                "inlier_count": int(len(self.inlier_ids))}


@dataclass(frozen=True)
class CatenaryModel:
    a: float
    b: float
    c: float
    rmse: float
    w: float | None = None     # linear weight density [N/m], user metadata
    t0: float | None = None    # tension at the sag point [N], = c * w

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("catenary parameter c must be positive")

    def predict(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        return self.a + self.c * np.cosh((y - self.b) / self.c)

    @property
    def vertex_y(self) -> float:
        return self.b

    def to_dict(self) -> dict:
        d = {"type": "catenary", "a": self.a, "b": self.b, "c": self.c,
             "rmse": self.rmse}
        if self.w is not None:
            d["w"] = self.w
            d["t0"] = self.t0
        return d


def _as_yz(points) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def lsq_quadratic(y: np.ndarray, z: np.ndarray) -> tuple[float, float, float]:
    """Closed-form least-squares coefficients (a2, a1, a0) of z over y."""
    design = np.column_stack([y * y, y, np.ones_like(y)])
    coef, *_ = np.linalg.lstsq(design, z, rcond=None)
    return float(coef[0]), float(coef[1]), float(coef[2])


def _quadratic_through(y3: np.ndarray, z3: np.ndarray) -> np.ndarray | None:
    """Exact quadratic through 3 points, or None when y-values coincide."""
    v = np.column_stack([y3 * y3, y3, np.ones(3)])
    try:
        coef = np.linalg.solve(v, z3)
    except np.linalg.LinAlgError:
        return None
    return coef if np.all(np.isfinite(coef)) else None


def fit_quadratic_msac(segment_points, inlier_tol: float, iterations: int,
                       rng_seed: int) -> QuadraticModel:
    """Robust quadratic fit via M-estimator sample consensus.

    Hypotheses are exact quadratics through 3 random points scored by
    sum(min(residual^2, inlier_tol^2)); the winner is refit by closed-form
    least squares on its inliers (|residual| <= inlier_tol). Bit-identical
    output for a fixed seed.
    """
    y, z = _as_yz(segment_points)
    n = len(y)
    if n < 3:
        raise ValueError("MSAC needs at least 3 points")
    if not inlier_tol > 0:
        raise ValueError("inlier_tol must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    rng = np.random.default_rng(rng_seed)
    tol_sq = inlier_tol * inlier_tol
    best_score = math.inf
    best_coef = None
    for _ in range(iterations):
        pick = rng.choice(n, size=3, replace=False)
        coef = _quadratic_through(y[pick], z[pick])
        if coef is None:
            continue
        resid = z - (coef[0] * y * y + coef[1] * y + coef[2])
        score = float(np.minimum(resid * resid, tol_sq).sum())
        if score < best_score:
            best_score = score
            best_coef = coef
    if best_coef is None:
        raise DegenerateSampleError(
            "every sampled triple was degenerate (duplicate y-coordinates)")
    resid = z - (best_coef[0] * y * y + best_coef[1] * y + best_coef[2])
    inliers = np.flatnonzero(np.abs(resid) <= inlier_tol)
    if inliers.size >= 3:
        a2, a1, a0 = lsq_quadratic(y[inliers], z[inliers])
    else:  # keep the hypothesis when too few inliers support a refit
        a2, a1, a0 = (float(v) for v in best_coef)
    final = z[inliers] - (a2 * y[inliers] ** 2 + a1 * y[inliers] + a0)
    rmse = float(np.sqrt(np.mean(final * final))) if inliers.size else math.inf
    return QuadraticModel(a2=a2, a1=a1, a0=a0, inlier_ids=inliers, rmse=rmse)


# ---------------------------------------------------------------------------
# Catenary refinement
# ---------------------------------------------------------------------------

def _catenary_residuals(y, z, p):
    a, b, c = p
    with np.errstate(over="ignore", invalid="ignore"):
        u = (y - b) / c
        return z - (a + c * np.cosh(u))


def _catenary_jacobian(y, p):
    a, b, c = p
    with np.errstate(over="ignore", invalid="ignore"):
        u = (y - b) / c
        sh, ch = np.sinh(u), np.cosh(u)
        return np.column_stack([-np.ones_like(y), sh, -(ch - u * sh)])


def _seed_from_quadratic(y: np.ndarray, z: np.ndarray,
                         a2: float, a1: float, a0: float) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        c0 = 1.0 / (2.0 * a2) if a2 != 0.0 else math.inf
    c0 = float(np.clip(c0, 1.0, 1e5))
    if abs(a2) > _FLAT_A2:
        b0 = -a1 / (2.0 * a2)
        vertex_z = a2 * b0 * b0 + a1 * b0 + a0
    else:
        b0 = float(y.mean())
        vertex_z = float(z.mean())
    return np.array([vertex_z - c0, b0, c0])


def fit_catenary(segment_points, w: float | None = None) -> CatenaryModel:
    """Least-squares catenary through (y, z) samples of one conductor.

    A plain quadratic fit seeds a damped Gauss-Newton refinement of
    (a, b, c); steps that grow the residual or push c non-positive raise
    the damping instead of being taken, so the result never scores worse
    than its initialization. Raises :class:`CatenaryFitError` (carrying the
    quadratic seed as fallback) when no descent is possible.
    """
    y, z = _as_yz(segment_points)
    if len(y) < 4:
        raise ValueError("catenary fit needs at least 4 points")
    if np.ptp(y) <= 1.0:
        raise ValueError("catenary fit needs points spanning more than 1 m")
    a2, a1, a0 = lsq_quadratic(y, z)
    quad_resid = z - (a2 * y * y + a1 * y + a0)
    quadratic = QuadraticModel(
        a2=a2, a1=a1, a0=a0, inlier_ids=np.arange(len(y)),
        rmse=float(np.sqrt(np.mean(quad_resid ** 2))))

    p = _seed_from_quadratic(y, z, a2, a1, a0)
    r = _catenary_residuals(y, z, p)
    ssq = float(r @ r) if np.all(np.isfinite(r)) else math.inf
    if not math.isfinite(ssq):
        raise CatenaryFitError(
            "seed residuals are not finite", quadratic=quadratic)

    damping = 1e-6
    accepted = False
    for _ in range(_MAX_ITER):
        jac = _catenary_jacobian(y, p)
        if not np.all(np.isfinite(jac)):
            raise CatenaryFitError(
                "jacobian overflow during refinement", quadratic=quadratic)
        g = jac.T @ r
        h = jac.T @ jac
        try:
            step = np.linalg.solve(h + damping * np.eye(3), -g)
        except np.linalg.LinAlgError:
            damping *= 10.0
            if damping > _MAX_DAMPING:
                break
            continue
        trial = p + step
        if trial[2] <= 0.0:
            damping *= 10.0
            if damping > _MAX_DAMPING:
                break
            continue
        r_trial = _catenary_residuals(y, z, trial)
        ssq_trial = (float(r_trial @ r_trial)
                     if np.all(np.isfinite(r_trial)) else math.inf)
        if ssq_trial <= ssq:
            p, r, ssq = trial, r_trial, ssq_trial
            accepted = True
            damping = max(damping * 0.3, 1e-12)
            if float(np.linalg.norm(step)) < _STEP_TOL:
                break
        else:
            damping *= 10.0
            if damping > _MAX_DAMPING:
                break
    if not accepted and damping > _MAX_DAMPING:
        raise CatenaryFitError(
            "no descent step found from the quadratic seed",
            quadratic=quadratic)
    a, b, c = (float(v) for v in p)
    rmse = float(np.sqrt(ssq / len(y)))
    t0 = c * w if w is not None else None
    return CatenaryModel(a=a, b=b, c=c, rmse=rmse, w=w, t0=t0)


# ---------------------------------------------------------------------------
# Sag / hazard assessment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SagReport:
    sag_depth: float
    vertex_y: float
    residual_p95: float
    hazard: bool
    undetermined: bool = False

    def to_dict(self) -> dict:
        return {"sag_depth": self.sag_depth, "vertex_y": self.vertex_y,
                "residual_p95": self.residual_p95, "hazard": self.hazard,
                "undetermined": self.undetermined}


def assess_sag(model, points, hazard_tol: float,
               sag_limit: float) -> SagReport:
    """Sag depth and residual-based hazard assessment of a fitted model.

    The sag depth is the drop from the chord through the fitted curve at the
    segment's extreme y-positions down to the curve at its vertex. Hazard is
    flagged when the 95th-percentile absolute residual exceeds hazard_tol or
    the sag exceeds sag_limit; a vertex outside the segment's y-range marks
    the report undetermined (the segment covers a partial span).
    """
    y, z = _as_yz(points)
    if len(y) == 0:
        raise ValueError("cannot assess an empty segment")
    y_lo, y_hi = float(y.min()), float(y.max())
    vertex_y = model.vertex_y
    if isinstance(model, QuadraticModel) and math.isnan(vertex_y):
        vertex_y = 0.5 * (y_lo + y_hi)  # straight wire: flat everywhere
    undetermined = not (y_lo <= vertex_y <= y_hi)
    z_lo = float(model.predict(y_lo))
    z_hi = float(model.predict(y_hi))
    if y_hi > y_lo:
        chord_at_vertex = z_lo + (z_hi - z_lo) * (vertex_y - y_lo) / (y_hi - y_lo)
    else:
        chord_at_vertex = z_lo
    sag_depth = max(0.0, chord_at_vertex - float(model.predict(vertex_y)))
    resid = np.abs(z - model.predict(y))
    residual_p95 = float(np.percentile(resid, 95))
    hazard = residual_p95 > hazard_tol or sag_depth > sag_limit
    return SagReport(sag_depth=sag_depth, vertex_y=float(vertex_y),
                     residual_p95=residual_p95, hazard=hazard,
                     undetermined=undetermined)
