"""Grid search over the constrained pipeline parameters.

Every grid cell runs the pipeline through segmentation and is scored by

    score = coverage * mean_linearity * found

where coverage is the fraction of denoised candidate points assigned to
segments (non-noise), mean_linearity the average LN of the segment point
sets, and found indicates at least one segment. Cells that abort score 0.
Equal scores resolve deterministically: smaller eps first, then larger
min_pts, then the remaining parameters in declaration order, each along
its preferred direction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, asdict

import numpy as np

from .cloud import PointCloud, build_index
from .config import PipelineConfig
from .errors import NoSegmentsError, PlcsegError
from .features import (apply_transform, candidate_mask, covariance,
                       eigen_features, estimate_regularization, outlier_mask)
from .segmentation import DbscanParams, segment_power_lines
from .elevation import filter_high_elevation


@dataclass(frozen=True)
class ParamGrid:
    """Candidate values per tunable parameter.

    ``r`` entries act as corridor radius overrides and may be empty, in
    which case the radius stays automatic. Every listed value must satisfy
    its constraint; violations raise immediately.
    """

    nbin: tuple[int, ...] = (100,)
    beta: tuple[float, ...] = (3.5, 4.0, 5.0)
    r: tuple[float, ...] = ()
    ln_thres: tuple[float, ...] = (0.7, 0.82, 0.9)
    alpha_thres: tuple[float, ...] = (5.0,)
    filt_mult: tuple[float, ...] = (4.0,)
    eps: tuple[float, ...] = (0.2, 0.4, 0.6)
    min_pts: tuple[int, ...] = (35, 50, 80)

    def __post_init__(self):
        rules = [
            ("nbin", self.nbin, lambda v: 2 <= v < 500, "2 <= nbin < 500"),
            ("beta", self.beta, lambda v: v > 3, "beta > 3"),
            ("r", self.r, lambda v: v > 0, "r > 0"),
            ("ln_thres", self.ln_thres, lambda v: 0.5 <= v <= 1.0,
             "ln_thres in [0.5, 1]"),
            ("alpha_thres", self.alpha_thres, lambda v: 0.0 <= v <= 20.0,
             "alpha_thres in [0, 20]"),
            ("filt_mult", self.filt_mult, lambda v: v > 0, "filt_mult > 0"),
            ("eps", self.eps, lambda v: v > 0.1, "eps > 0.1"),
            ("min_pts", self.min_pts, lambda v: v > 30, "min_pts > 30"),
        ]
        for name, values, ok, rule in rules:
            for v in values:
                if not ok(v):
                    raise ValueError(f"grid value {name}={v!r} violates {rule}")
            if name != "r" and len(values) == 0:
                raise ValueError(f"grid for {name} must not be empty")

    def cells(self) -> list[dict]:
        r_values = self.r if self.r else (None,)
        out = []
        for combo in itertools.product(self.nbin, self.beta, r_values,
                                       self.ln_thres, self.alpha_thres,
                                       self.filt_mult, self.eps, self.min_pts):
            nbin, beta, r, ln, alpha, filt, eps, min_pts = combo
            out.append({"nbin": nbin, "beta": beta, "r": r, "ln_thres": ln,
                        "alpha_thres": alpha, "filt_mult": filt, "eps": eps,
                        "min_pts": min_pts})
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ParamGrid":
        unknown = set(d) - set(ParamGrid.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown grid keys: {sorted(unknown)}")
        return ParamGrid(**{k: tuple(v) for k, v in d.items()})


@dataclass(frozen=True)
class TuneResult:
    best_config: PipelineConfig
    score: float
    evaluated: int
    table: list[dict] = field(repr=False)

    def to_dict(self) -> dict:
        return {"best_config": self.best_config.to_dict(),
                "score": self.score, "evaluated": self.evaluated,
                "table": self.table}


def segment_linearity(xyz: np.ndarray) -> float:
    """LN of a whole segment treated as one neighborhood."""
    if len(xyz) < 3:
        return 0.0
    evals = np.linalg.eigvalsh(covariance(xyz))
    l1, l2 = float(evals[2]), float(evals[1])
    return (l1 - l2) / l1 if l1 > 0 else 0.0


def _tie_key(cell: dict) -> tuple:
    """Total order among equal scores: each parameter along its preferred
    optimization direction (eps and the minimized ones ascending, min_pts
    and the maximized ones descending)."""
    r = cell["r"] if cell["r"] is not None else float("-inf")
    return (cell["eps"], -cell["min_pts"], cell["nbin"], cell["beta"], -r,
            -cell["ln_thres"], cell["alpha_thres"], cell["filt_mult"])


class _StageCache:
    """Shares the expensive filter + eigen-feature work across grid cells."""

    def __init__(self, cloud: PointCloud, base: PipelineConfig):
        self.cloud = cloud
        self.base = base
        self._cache: dict = {}

    def features_for(self, nbin: int, beta: float):
        key = (nbin, beta)
        if key not in self._cache:
            try:
                high, _ = filter_high_elevation(
                    self.cloud,
                    self.base.replace(nbin=nbin, beta=beta).elevation_params())
                feats = eigen_features(build_index(high), high,
                                       self.base.k_neighbors)
                self._cache[key] = (high, feats)
            except PlcsegError as exc:
                self._cache[key] = exc
        value = self._cache[key]
        if isinstance(value, PlcsegError):
            raise value
        return value


def _evaluate(cache: _StageCache, cell: dict) -> float:
    base = cache.base
    high, feats = cache.features_for(cell["nbin"], cell["beta"])
    params = base.replace(ln_thres=cell["ln_thres"],
                          alpha_thres=cell["alpha_thres"],
                          filt_mult=cell["filt_mult"]).candidate_params()
    mask = candidate_mask(feats, params)
    if not mask.any():
        return 0.0
    candidates = high.select(mask)
    if len(candidates) <= base.k_neighbors:
        return 0.0
    keep = ~outlier_mask(candidates, base.k_neighbors, cell["filt_mult"])
    denoised = candidates.select(keep)
    transform = estimate_regularization(denoised)
    regularized = apply_transform(denoised, transform)
    dbp = DbscanParams(eps=cell["eps"], min_pts=cell["min_pts"])
    segments = segment_power_lines(regularized, dbp, dbp)
    assigned = sum(len(s) for s in segments)
    coverage = assigned / len(denoised)
    mean_ln = float(np.mean([
        segment_linearity(regularized.xyz[s.point_ids]) for s in segments]))
    return coverage * mean_ln


def tune(cloud: PointCloud, grid: ParamGrid,
         base: PipelineConfig | None = None) -> TuneResult:
    """Exhaustively score the grid and return the best constrained config.

    Deterministic: identical cloud and grid give an identical result.
    Raises :class:`NoSegmentsError` when every cell fails.
    """
    base = (base or PipelineConfig()).validate()
    cells = grid.cells()
    if not cells:
        raise ValueError("empty parameter grid")
    cache = _StageCache(cloud, base)
    score_cache: dict[tuple, float] = {}
    table = []
    best = None  # (-score, tie_key, cell)
    for cell in cells:
        key = tuple(sorted(cell.items()))
        if key not in score_cache:
            try:
                score_cache[key] = _evaluate(cache, cell)
            except PlcsegError:
                score_cache[key] = 0.0
        score = score_cache[key]
        table.append({**cell, "score": score})
        rank = (-score, _tie_key(cell))
        if best is None or rank < best[0]:
            best = (rank, cell)
    best_cell = best[1]
    best_score = -best[0][0]
    if best_score <= 0.0:
        raise NoSegmentsError("no power line found under any configuration")
    best_config = base.replace(
        nbin=best_cell["nbin"], beta=best_cell["beta"],
        ln_thres=best_cell["ln_thres"], alpha_thres=best_cell["alpha_thres"],
        filt_mult=best_cell["filt_mult"], eps=best_cell["eps"],
        min_pts=best_cell["min_pts"],
        r_override=(best_cell["r"] if best_cell["r"] is not None
                    else base.r_override))
    return TuneResult(best_config=best_config, score=best_score,
                      evaluated=len(table), table=table)
