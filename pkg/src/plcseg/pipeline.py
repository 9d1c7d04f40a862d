"""End-to-end pipeline: filter -> features/candidates -> denoise ->
regularize -> two-stage segmentation -> per-segment fitting -> corridor.

``execute`` runs the stages on an in-memory cloud and returns every
intermediate (original-cloud ids are tracked through all filters, so
segment and corridor results can be mapped back onto the input points);
``run_pipeline`` adds file I/O and report/output writing around it.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import catenary as cat
from .cloud import PointCloud, build_index, read_cloud, write_cloud, FORMAT_ASCII
from .config import PipelineConfig
from .corridor import CorridorReport, extract_corridor, select_radius
from .elevation import ElevationReport, filter_high_elevation
from .errors import CatenaryFitError, DegenerateSampleError, NoCandidatesError, NoSegmentsError
from .features import (EigenFeatures, RegularizationTransform, apply_transform,
                       candidate_mask, eigen_features, estimate_regularization,
                       outlier_mask)
from .segmentation import PowerLineSegment, segment_power_lines, segment_summary

STAGES = ("filter", "features", "segment", "fit", "corridor")


@dataclass(frozen=True)
class SegmentFit:
    """Fitted models of one segment; the catenary is None when the
    nonlinear refinement was skipped or failed (quadratic fallback)."""

    segment_id: int
    quadratic: cat.QuadraticModel
    catenary: cat.CatenaryModel | None
    sag: cat.SagReport

    @property
    def model(self):
        return self.catenary if self.catenary is not None else self.quadratic

    def to_dict(self) -> dict:
        d = {"segment_id": self.segment_id,
             "model": self.model.to_dict(),
             "quadratic": self.quadratic.to_dict(),
             "rmse": self.model.rmse}
        d.update(self.sag.to_dict())
        return d


@dataclass
class PipelineState:
    """All intermediates of one pipeline run."""

    cloud: PointCloud
    config: PipelineConfig
    elevation: ElevationReport | None = None
    ids_high: np.ndarray | None = None
    features: EigenFeatures | None = None
    ids_candidates: np.ndarray | None = None
    ids_kept: np.ndarray | None = None
    transform: RegularizationTransform | None = None
    regularized: PointCloud | None = None      # denoised candidates, rotated
    segments: list[PowerLineSegment] = field(default_factory=list)
    fits: list[SegmentFit] = field(default_factory=list)
    corridor: CorridorReport | None = None
    regularized_full: PointCloud | None = None
    timings: list[dict] = field(default_factory=list)

    def segment_full_ids(self, segment: PowerLineSegment) -> np.ndarray:
        """Translate one segment's point ids into original-cloud ids."""
        return self.ids_kept[segment.point_ids]

    def full_space_segments(self) -> list[PowerLineSegment]:
        return [PowerLineSegment(s.segment_id, self.segment_full_ids(s),
                                 s.stage1_id, s.stage2_id)
                for s in self.segments]


def _timed(state: PipelineState, name: str, points_in: int, fn,
           points_out=len):
    t0 = time.perf_counter()
    out = fn()
    ms = (time.perf_counter() - t0) * 1e3
    state.timings.append({"name": name, "ms": ms, "points_in": points_in,
                          "points_out": int(points_out(out))})
    return out


def _fit_segment(seg: PowerLineSegment, yz: np.ndarray,
                 config: PipelineConfig) -> SegmentFit | None:
    pts = yz[seg.point_ids]
    try:
        quad = cat.fit_quadratic_msac(pts, inlier_tol=config.inlier_tol,
                                      iterations=config.msac_iterations,
                                      rng_seed=config.seed)
    except DegenerateSampleError:
        return None
    inl = pts[quad.inlier_ids] if len(quad.inlier_ids) >= 4 else pts
    model = None
    if len(inl) >= 4 and np.ptp(inl[:, 0]) > 1.0:
        try:
            model = cat.fit_catenary(inl, w=config.conductor_weight)
        except CatenaryFitError:
            model = None
    sag = cat.assess_sag(model if model is not None else quad, pts,
                         hazard_tol=config.hazard_tol,
                         sag_limit=config.sag_limit)
    return SegmentFit(segment_id=seg.segment_id, quadratic=quad,
                      catenary=model, sag=sag)


def execute(cloud: PointCloud, config: PipelineConfig,
            until: str = "corridor") -> PipelineState:
    """Run the pipeline stages on a cloud, stopping after ``until``."""
    if until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; choose from {STAGES}")
    config.validate()
    state = PipelineState(cloud=cloud, config=config)
    stop = STAGES.index(until)

    def filter_stage():
        high, report = filter_high_elevation(cloud, config.elevation_params())
        state.elevation = report
        state.ids_high = np.flatnonzero(cloud.z > report.cut_z)
        return high

    high = _timed(state, "filter", len(cloud), filter_stage)
    if stop < 1:
        return state

    def feature_stage():
        index = build_index(high)
        feats = eigen_features(index, high, config.k_neighbors)
        state.features = feats
        cand = candidate_mask(feats, config.candidate_params())
        if not cand.any():
            raise NoCandidatesError("no power-line candidates")
        state.ids_candidates = state.ids_high[cand]
        candidates = high.select(cand)
        if len(candidates) <= config.k_neighbors:
            raise NoCandidatesError(
                "too few power-line candidates for outlier removal")
        keep = ~outlier_mask(candidates, config.k_neighbors, config.filt_mult)
        state.ids_kept = state.ids_candidates[keep]
        denoised = candidates.select(keep)
        state.transform = estimate_regularization(denoised)
        state.regularized = apply_transform(denoised, state.transform)
        return state.regularized

    regularized = _timed(state, "features", len(high), feature_stage)
    if stop < 2:
        return state

    state.segments = _timed(
        state, "segment", len(regularized),
        lambda: segment_power_lines(regularized, config.stage1_dbscan(),
                                    config.stage2_dbscan()),
        points_out=lambda segs: sum(len(s) for s in segs))
    if stop < 3:
        return state

    def fit_stage():
        yz = regularized.xyz[:, 1:3]
        fits = []
        kept_segments = []
        for seg in state.segments:
            fit = _fit_segment(seg, yz, config)
            if fit is not None:
                fits.append(fit)
                kept_segments.append(seg)
        if not fits:
            raise NoSegmentsError("no segment could be fitted")
        state.segments = kept_segments
        return fits

    state.fits = _timed(state, "fit", len(state.segments), fit_stage,
                        points_out=len)
    if stop < 4:
        return state

    def corridor_stage():
        state.regularized_full = apply_transform(cloud, state.transform)
        segments_full = state.full_space_segments()
        r = select_radius(segments_full, state.fits, state.regularized_full,
                          config.corridor_params())
        return extract_corridor(state.regularized_full, segments_full,
                                state.fits, r, config.clearance)

    state.corridor = _timed(state, "corridor", len(cloud), corridor_stage,
                            points_out=lambda rep: len(rep.classes))
    return state


# ---------------------------------------------------------------------------
# Report assembly and file outputs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineReport:
    input_points: int
    area_m2: float
    stages: list[dict]
    elevation: dict | None
    theta: float | None
    theta_check: float | None
    counts: dict
    segments: list[dict]
    fits: list[dict]
    corridor: dict | None
    total_ms: float
    ms_per_m2: float | None

    def to_dict(self) -> dict:
        return {
            "input_points": self.input_points,
            "area_m2": self.area_m2,
            "stages": self.stages,
            "elevation": self.elevation,
            "theta": self.theta,
            "theta_check": self.theta_check,
            "counts": self.counts,
            "segments": self.segments,
            "fits": self.fits,
            "corridor": self.corridor,
            "total_ms": self.total_ms,
            "ms_per_m2": self.ms_per_m2,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def build_report(state: PipelineState, max_hazards: int = 10000) -> PipelineReport:
    cloud = state.cloud
    area = cloud.xy_area() if len(cloud) else 0.0
    total_ms = float(sum(t["ms"] for t in state.timings))
    counts = {
        "input": len(cloud),
        "high_elevation": int(len(state.ids_high)) if state.ids_high is not None else None,
        "candidates": int(len(state.ids_candidates)) if state.ids_candidates is not None else None,
        "denoised": int(len(state.ids_kept)) if state.ids_kept is not None else None,
        "segmented": int(sum(len(s) for s in state.segments)) if state.segments else 0,
    }
    seg_blocks = []
    if state.segments and state.regularized is not None:
        seg_blocks = [segment_summary(s, state.regularized.xyz)
                      for s in state.segments]
    return PipelineReport(
        input_points=len(cloud),
        area_m2=area,
        stages=state.timings,
        elevation=state.elevation.to_dict() if state.elevation else None,
        theta=state.transform.theta if state.transform else None,
        theta_check=state.transform.theta_check if state.transform else None,
        counts=counts,
        segments=seg_blocks,
        fits=[f.to_dict() for f in state.fits],
        corridor=state.corridor.to_dict(max_hazards) if state.corridor else None,
        total_ms=total_ms,
        ms_per_m2=(total_ms / area) if area > 0 else None,
    )


def write_outputs(state: PipelineState, output_dir) -> dict[str, Path]:
    """Write the labeled corridor cloud, segment cloud, and JSON report."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    report = build_report(state)
    path = out / "report.json"
    path.write_text(report.to_json())
    written["report"] = path
    if state.corridor is not None:
        labeled = state.cloud.with_labels(state.corridor.classes)
        path = out / "corridor_labels.xyz"
        write_cloud(labeled, path, FORMAT_ASCII)
        written["corridor_labels"] = path
    if state.segments:
        ids = np.concatenate([state.segment_full_ids(s) for s in state.segments])
        seg_labels = np.concatenate([
            np.full(len(s), s.segment_id, dtype=np.int64) for s in state.segments])
        seg_cloud = PointCloud(state.cloud.xyz[ids], seg_labels)
        path = out / "segments.xyz"
        write_cloud(seg_cloud, path, FORMAT_ASCII)
        written["segments"] = path
    if state.transform is not None:
        path = out / "transform.json"
        path.write_text(json.dumps(state.transform.to_dict(), indent=2,
                                   sort_keys=True) + "\n")
        written["transform"] = path
    return written


def run_pipeline(input_path, config: PipelineConfig, output_dir=None,
                 fmt: str = FORMAT_ASCII, until: str = "corridor"
                 ) -> tuple[PipelineReport, PipelineState]:
    """File-to-file pipeline entry point."""
    cloud = (input_path if isinstance(input_path, PointCloud)
             else read_cloud(input_path, fmt))
    state = execute(cloud, config, until=until)
    if output_dir is not None:
        write_outputs(state, output_dir)
    return build_report(state), state
