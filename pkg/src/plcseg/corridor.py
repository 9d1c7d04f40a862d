"""Power Line Corridor extraction and per-point hazard classification.

Every point of the survey cloud is classified by its distance to the
nearest segmented conductor point: within the clearance distance it is a
hazard, within the corridor radius r it belongs to the corridor, otherwise
it is background. The radius itself either comes from the user, from the
maximum conductor height (open terrain), or from the spread of near-field
points around the fitted curves (complex terrain).

All geometry here lives in one consistent frame; distances are invariant
under the regularization rotation, so callers may pass either frame as
long as cloud and segments agree. Segment point ids must index the cloud
passed in.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cloud import KdIndex, PointCloud
from .errors import NoSegmentsError

CLASS_OTHER = 0
CLASS_CORRIDOR = 1
CLASS_HAZARD = 2
CLASS_CONDUCTOR = 3

MODE_COMPLEX = "complex"
MODE_OPEN = "open"


@dataclass(frozen=True)
class CorridorParams:
    mode: str = MODE_OPEN
    clearance: float = 2.0
    r_override: float | None = None

    def __post_init__(self):
        if self.mode not in (MODE_COMPLEX, MODE_OPEN):
            raise ValueError(f"mode must be '{MODE_COMPLEX}' or '{MODE_OPEN}'")
        if not self.clearance > 0:
            raise ValueError("clearance must be positive")
        if self.r_override is not None and not self.r_override > 0:
            raise ValueError("r_override must be positive when given")


@dataclass(frozen=True)
class CorridorReport:
    r_used: float
    classes: np.ndarray = field(repr=False)  # (n,) codes above
    hazard_points: list[tuple[int, float, int]] = field(repr=False)

    def class_counts(self) -> dict[str, int]:
        names = {CLASS_OTHER: "other", CLASS_CORRIDOR: "corridor",
                 CLASS_HAZARD: "hazard", CLASS_CONDUCTOR: "conductor"}
        return {names[k]: int((self.classes == k).sum()) for k in names}

    def to_dict(self, max_hazards: int | None = None) -> dict:
        hz = self.hazard_points
        if max_hazards is not None:
            hz = hz[:max_hazards]
        return {
            "r_used": self.r_used,
            "class_counts": self.class_counts(),
            "hazard_points": [
                {"point_id": pid, "distance": dist, "segment_id": seg}
                for pid, dist, seg in hz],
        }


def _curve_of(model):
    """Prefer the catenary when a fit result carries both models."""
    cat = getattr(model, "catenary", None)
    if cat is not None:
        return cat
    quad = getattr(model, "quadratic", None)
    if quad is not None:
        return quad
    return model


def _quadratic_of(model):
    quad = getattr(model, "quadratic", None)
    return quad if quad is not None else model


def conductor_ids(segments) -> np.ndarray:
    if not segments:
        raise NoSegmentsError("no segments to build a corridor around")
    return np.concatenate([np.asarray(s.point_ids) for s in segments])


def select_radius(segments, models, cloud: PointCloud,
                  params: CorridorParams) -> float:
    """Corridor search radius.

    complex mode: the larger of the maximum vertical offset of near-field
    points from the fitted curves and their maximum cross-section distance
    from the conductor planes. open mode: the maximum quadratic height
    coefficient a0 (the conductor height scale). An explicit r_override
    always wins. ``cloud`` must be in the regularized frame with segment
    ids indexing it.
    """
    if params.r_override is not None:
        return float(params.r_override)
    if not segments:
        raise NoSegmentsError("no segments to size a corridor for")
    max_a0 = max(float(_quadratic_of(m).a0) for m in models)
    if params.mode == MODE_OPEN:
        return max_a0
    cond = conductor_ids(segments)
    is_cond = np.zeros(len(cloud), dtype=bool)
    is_cond[cond] = True
    margin = 2.0 * max_a0
    near = np.zeros(len(cloud), dtype=bool)
    for seg in segments:
        pts = cloud.xyz[seg.point_ids]
        lo = pts.min(axis=0) - margin
        hi = pts.max(axis=0) + margin
        near |= np.all((cloud.xyz >= lo) & (cloud.xyz <= hi), axis=1)
    near &= ~is_cond
    if not near.any():
        return max_a0
    q = cloud.xyz[near]
    dz_best = np.full(len(q), np.inf)
    di_best = np.full(len(q), np.inf)
    for seg, model in zip(segments, models):
        curve = _curve_of(model)
        plane_x = float(cloud.xyz[seg.point_ids, 0].mean())
        dz = np.abs(q[:, 2] - curve.predict(q[:, 1]))
        di = np.sqrt((q[:, 0] - plane_x) ** 2 + dz * dz)
        dz_best = np.minimum(dz_best, dz)
        di_best = np.minimum(di_best, di)
    return float(max(dz_best.max(), di_best.max()))


def extract_corridor(full_cloud: PointCloud, segments, models, r: float,
                     clearance: float) -> CorridorReport:
    """Classify every point of the cloud against the segmented conductors.

    Precedence: conductor > hazard > corridor > other. Hazard points carry
    their distance to, and the segment id of, the nearest conductor point.
    A clearance larger than r is honored only up to r (with a warning), so
    hazard and corridor members always lie within r.
    """
    if not segments:
        raise NoSegmentsError("no segments to extract a corridor around")
    if r < clearance:
        warnings.warn("corridor radius r is smaller than the clearance; "
                      "hazards are only detected up to r", stacklevel=2)
    cond = conductor_ids(segments)
    seg_of = np.concatenate([
        np.full(len(s.point_ids), s.segment_id, dtype=np.int64)
        for s in segments])
    index = KdIndex(full_cloud.xyz[cond])
    dist, nearest = index.nearest(full_cloud.xyz)
    classes = np.full(len(full_cloud), CLASS_OTHER, dtype=np.int64)
    classes[dist <= r] = CLASS_CORRIDOR
    hazard_cut = min(clearance, r)
    classes[dist <= hazard_cut] = CLASS_HAZARD
    classes[cond] = CLASS_CONDUCTOR
    hazard_ids = np.flatnonzero(classes == CLASS_HAZARD)
    hazard_points = [
        (int(i), float(dist[i]), int(seg_of[nearest[i]]))
        for i in hazard_ids]
    return CorridorReport(r_used=float(r), classes=classes,
                          hazard_points=hazard_points)
