"""Per-point PCA eigen-features, candidate selection, denoising, and the
rotation that aligns the conductor span with the Y-axis.

For every point the covariance of its k-nearest neighborhood (the point
itself included) is eigen-decomposed; the eigenvalue ratios give the
linear- (LN), planar- (PL) and spherical-likeness (SP):

    LN = (l1 - l2) / l1,  PL = (l2 - l3) / l1,  SP = l3 / l1

with l1 >= l2 >= l3 >= 0, so LN + PL + SP = 1 whenever l1 > 0. Power-line
candidates are points with high LN whose dominant direction is close to
horizontal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cloud import KdIndex, PointCloud, build_index
from .errors import NoCandidatesError, OrientationError, PlcsegError

#: eigenvalues more negative than -trace * this are never produced by the
#: PSD construction; anything smaller in magnitude is round-off and clamped
_EIG_CLAMP_REL = 1e-12

_CHUNK = 65536  # rows per vectorized feature chunk, bounds peak memory


def covariance(neighborhood) -> np.ndarray:
    """Covariance (1/N) Xc^T Xc of a neighborhood of at least 3 points.

    Xc is the mean-centered coordinate matrix; the result is symmetric
    positive semi-definite.
    """
    pts = np.asarray(neighborhood, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 3:
        raise ValueError("covariance needs at least 3 points")
    centered = pts - pts.mean(axis=0)
    return centered.T @ centered / len(pts)


@dataclass(frozen=True)
class EigenFeatures:
    """Structure-of-arrays feature block aligned with a cloud.

    ``eigenvalues[i]`` is descending; ``eigenvectors[i, :, j]`` is the unit
    eigenvector of ``eigenvalues[i, j]``.
    """

    eigenvalues: np.ndarray    # (n, 3)
    eigenvectors: np.ndarray   # (n, 3, 3)
    ln: np.ndarray             # (n,)
    pl: np.ndarray             # (n,)
    sp: np.ndarray             # (n,)
    neighbor_count: np.ndarray  # (n,)

    def __len__(self) -> int:
        return len(self.ln)

    @property
    def v1(self) -> np.ndarray:
        """Dominant unit direction per point, shape (n, 3)."""
        return self.eigenvectors[:, :, 0]


def _eigen_decompose(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched symmetric eigendecomposition, sorted descending and clamped."""
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[:, ::-1]
    evecs = evecs[:, :, ::-1]
    trace = np.trace(cov, axis1=1, axis2=2)
    tol = _EIG_CLAMP_REL * np.abs(trace)[:, None]
    evals = np.where((evals < 0) & (-evals < tol), 0.0, evals)
    return np.ascontiguousarray(evals), np.ascontiguousarray(evecs)


def eigen_features(index: KdIndex, cloud: PointCloud, k: int) -> EigenFeatures:
    """Eigen-features of every point's k-nearest neighborhood.

    Neighborhoods come from ``index`` (normally built over ``cloud``) and
    include the query point itself; when the indexed set is smaller than
    ``k`` the whole set is used and ``neighbor_count`` records the true size.
    Points with a fully degenerate neighborhood (l1 = 0) get LN = PL = SP = 0.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    n = len(cloud)
    k_eff = min(k, len(index))
    evals = np.empty((n, 3))
    evecs = np.empty((n, 3, 3))
    ln = np.zeros(n)
    pl = np.zeros(n)
    sp = np.zeros(n)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        _, idx = index.knn_batch(cloud.xyz[lo:hi], k_eff)
        nbrs = index.xyz[idx]                      # (m, k, 3)
        centered = nbrs - nbrs.mean(axis=1, keepdims=True)
        cov = np.matmul(centered.transpose(0, 2, 1), centered) / k_eff
        w, v = _eigen_decompose(cov)
        evals[lo:hi] = w
        evecs[lo:hi] = v
        l1 = w[:, 0]
        ok = l1 > 0
        ln[lo:hi][ok] = (l1[ok] - w[ok, 1]) / l1[ok]
        pl[lo:hi][ok] = (w[ok, 1] - w[ok, 2]) / l1[ok]
        sp[lo:hi][ok] = w[ok, 2] / l1[ok]
    counts = np.full(n, k_eff, dtype=np.int64)
    return EigenFeatures(evals, evecs, ln, pl, sp, counts)


# ---------------------------------------------------------------------------
# Candidate selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CandidateParams:
    k_neighbors: int = 10
    ln_thres: float = 0.82
    alpha_thres: float = 5.0   # degrees
    filt_mult: float = 4.0

    def __post_init__(self):
        if self.k_neighbors < 5:
            raise ValueError("k_neighbors must be >= 5 (need more than 4 neighbors)")
        if not 0.5 <= self.ln_thres <= 1.0:
            raise ValueError("ln_thres must lie in [0.5, 1]")
        if not 0.0 <= self.alpha_thres <= 20.0:
            raise ValueError("alpha_thres must lie in [0, 20] degrees")
        if not self.filt_mult > 0:
            raise ValueError("filt_mult must be positive")


def horizontal_angle_deg(v: np.ndarray) -> np.ndarray:
    """Angle (degrees) between unit vectors and the horizontal plane."""
    vz = np.abs(np.asarray(v)[..., 2])
    return np.degrees(np.arcsin(np.clip(vz, 0.0, 1.0)))


def candidate_mask(features: EigenFeatures, params: CandidateParams) -> np.ndarray:
    """Boolean mask of points passing the LN, direction and density tests."""
    angles = horizontal_angle_deg(features.v1)
    return ((features.ln >= params.ln_thres)
            & (angles <= params.alpha_thres)
            & (features.neighbor_count > 4))


def select_candidates(cloud: PointCloud, features: EigenFeatures,
                      params: CandidateParams) -> PointCloud:
    """Keep the points that look like conductor samples.

    A point survives when LN >= ln_thres, its dominant direction lies within
    alpha_thres degrees of the horizontal plane, and it has more than 4
    neighbors. Raises :class:`NoCandidatesError` when nothing survives.
    """
    if len(features) != len(cloud):
        raise ValueError("features are not aligned with the cloud")
    mask = candidate_mask(features, params)
    if not mask.any():
        raise NoCandidatesError("no power-line candidates")
    return cloud.select(mask)


# ---------------------------------------------------------------------------
# Statistical outlier removal
# ---------------------------------------------------------------------------

def mean_knn_distances(cloud: PointCloud, k: int) -> np.ndarray:
    """Each point's mean distance to its k nearest other points."""
    if len(cloud) <= k:
        raise ValueError(f"need more than k={k} points, have {len(cloud)}")
    index = build_index(cloud)
    dists, ids = index.knn_batch(cloud.xyz, k + 1)
    n = len(cloud)
    own = ids == np.arange(n)[:, None]
    # drop the query point itself; for duplicate coordinates the own id may
    # sit anywhere in the tie range, so mask it explicitly
    has_self = own.any(axis=1)
    drop = np.where(has_self, own.argmax(axis=1), k)  # else drop the farthest
    keep = np.ones_like(dists, dtype=bool)
    keep[np.arange(n), drop] = False
    return dists[keep].reshape(n, k).mean(axis=1)


def outlier_mask(cloud: PointCloud, k: int, filt_mult: float) -> np.ndarray:
    """True for points whose mean k-NN distance exceeds mu + filt_mult*sigma."""
    means = mean_knn_distances(cloud, k)
    mu = means.mean()
    sigma = means.std()
    return means > mu + filt_mult * sigma


def remove_statistical_outliers(cloud: PointCloud, k: int,
                                filt_mult: float) -> PointCloud:
    """Drop points unusually far from their k nearest neighbors.

    The threshold is mu + filt_mult*sigma over the per-point mean neighbor
    distances; on perfectly uniform spacing (sigma = 0) nothing is removed.
    """
    return cloud.select(~outlier_mask(cloud, k, filt_mult))


# ---------------------------------------------------------------------------
# Regularization (rotation about Z aligning the span with +Y)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegularizationTransform:
    """Rotation about the Z-axis through ``pivot`` by ``theta`` radians.

    ``theta_check`` is the same angle recovered through the unit-normal
    arccos formulation; both derivations must agree (they are cross-checked
    at estimation time).
    """

    theta: float
    matrix: np.ndarray = field(repr=False)   # (3, 3)
    pivot: np.ndarray = field(repr=False)    # (3,)
    theta_check: float = 0.0

    @staticmethod
    def identity() -> "RegularizationTransform":
        return RegularizationTransform(0.0, np.eye(3), np.zeros(3), 0.0)

    def to_dict(self) -> dict:
        return {"theta": self.theta, "theta_check": self.theta_check,
                "pivot": self.pivot.tolist(), "matrix": self.matrix.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "RegularizationTransform":
        return RegularizationTransform(
            float(d["theta"]), np.asarray(d["matrix"], dtype=np.float64),
            np.asarray(d["pivot"], dtype=np.float64), float(d["theta_check"]))


def rotation_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def estimate_regularization(candidates: PointCloud) -> RegularizationTransform:
    """Rotation about Z mapping the dominant candidate direction onto +Y.

    Requires a clearly linear candidate cloud (largest covariance eigenvalue
    more than twice the second). The angle is computed from the horizontal
    components of the dominant eigenvector and cross-validated against the
    plane-normal arccos formulation; disagreement beyond 1e-6 rad aborts.
    """
    if len(candidates) < 3:
        raise OrientationError("too few candidate points to orient")
    cov = covariance(candidates.xyz)
    evals, evecs = np.linalg.eigh(cov)
    if not evals[2] > 2.0 * evals[1]:
        raise OrientationError("ambiguous line orientation")
    v1 = evecs[:, 2]
    dx, dy = float(v1[0]), float(v1[1])
    h = math.hypot(dx, dy)
    if h == 0.0:
        raise OrientationError("dominant direction is vertical")
    if dy < 0.0 or (dy == 0.0 and dx < 0.0):
        dx, dy = -dx, -dy
    theta = math.atan2(dx, dy)  # in (-pi/2, pi/2] after canonicalization
    # cross-check: angle between the ZY-plane normal (x-axis) and the unit
    # normal of the vertical plane containing the span direction
    n2 = np.array([dy / h, -dx / h, 0.0])
    theta_check = math.acos(max(-1.0, min(1.0, n2[0])))
    if abs(abs(theta) - theta_check) > 1e-6:
        raise PlcsegError("rotation-angle cross-check failed")
    pivot = candidates.xyz.mean(axis=0)
    return RegularizationTransform(theta, rotation_z(theta), pivot, theta_check)


def apply_transform(cloud: PointCloud, t: RegularizationTransform) -> PointCloud:
    """Rotate a cloud about the Z-axis through the transform's pivot.

    Z-coordinates and all pairwise distances are preserved.
    """
    xyz = (cloud.xyz - t.pivot) @ t.matrix.T + t.pivot
    return PointCloud(xyz, cloud.labels)
