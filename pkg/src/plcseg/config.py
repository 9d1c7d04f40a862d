"""Pipeline configuration: one flat, JSON-serializable parameter set.

Loading validates every field against its optimization constraint
(nbin < 500, beta > 3, ln_thres in [0.5, 1], alpha_thres in [0, 20],
eps > 0.1, min_pts > 30, positive tolerances) and rejects unknown keys,
so a config that loads is a config the pipeline accepts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

from .corridor import CorridorParams, MODE_COMPLEX, MODE_OPEN
from .elevation import ElevationFilterParams
from .errors import ConfigError
from .features import CandidateParams
from .segmentation import DbscanParams


@dataclass(frozen=True)
class PipelineConfig:
    # elevation filter
    nbin: int = 100
    beta: float = 4.0
    # eigen features / candidates
    k_neighbors: int = 10
    ln_thres: float = 0.82
    alpha_thres: float = 5.0
    filt_mult: float = 4.0
    # two-stage clustering (stage 2 falls back to the stage-1 values)
    eps: float = 0.2
    min_pts: int = 50
    stage2_eps: float | None = None
    stage2_min_pts: int | None = None
    # conductor fitting
    inlier_tol: float = 0.1
    msac_iterations: int = 200
    seed: int = 0
    hazard_tol: float = 0.2
    sag_limit: float = 10.0
    conductor_weight: float | None = None   # N/m, enables tension reporting
    # corridor
    corridor_mode: str = MODE_OPEN
    clearance: float = 2.0
    r_override: float | None = None

    def validate(self) -> "PipelineConfig":
        for name, ok, rule in _CONSTRAINTS:
            value = getattr(self, name)
            if not ok(value):
                raise ConfigError(f"{name}={value!r} violates constraint: {rule}")
        return self

    # -- stage parameter objects -------------------------------------------

    def elevation_params(self) -> ElevationFilterParams:
        return ElevationFilterParams(nbin=self.nbin, beta=self.beta)

    def candidate_params(self) -> CandidateParams:
        return CandidateParams(k_neighbors=self.k_neighbors,
                               ln_thres=self.ln_thres,
                               alpha_thres=self.alpha_thres,
                               filt_mult=self.filt_mult)

    def stage1_dbscan(self) -> DbscanParams:
        return DbscanParams(eps=self.eps, min_pts=self.min_pts)

    def stage2_dbscan(self) -> DbscanParams:
        eps = self.eps if self.stage2_eps is None else self.stage2_eps
        min_pts = self.min_pts if self.stage2_min_pts is None else self.stage2_min_pts
        return DbscanParams(eps=eps, min_pts=min_pts)

    def corridor_params(self) -> CorridorParams:
        return CorridorParams(mode=self.corridor_mode,
                              clearance=self.clearance,
                              r_override=self.r_override)

    # -- (de)serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "PipelineConfig":
        d = self.to_dict()
        d.update(kw)
        return PipelineConfig(**d).validate()

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(PipelineConfig)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = PipelineConfig(**d)
        except TypeError as exc:
            raise ConfigError(str(exc))
        return cfg.validate()

    @staticmethod
    def from_json_file(path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot load config: {exc}")
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return PipelineConfig.from_dict(data)

    def to_json_file(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2,
                                         sort_keys=True) + "\n")


def _positive(x) -> bool:
    return x is not None and x > 0


_CONSTRAINTS: list = [
    ("nbin", lambda v: 2 <= v < 500, "2 <= nbin < 500"),
    ("beta", lambda v: v > 3, "beta > 3"),
    ("k_neighbors", lambda v: v >= 5, "k_neighbors >= 5"),
    ("ln_thres", lambda v: 0.5 <= v <= 1.0, "ln_thres in [0.5, 1]"),
    ("alpha_thres", lambda v: 0.0 <= v <= 20.0, "alpha_thres in [0, 20]"),
    ("filt_mult", _positive, "filt_mult > 0"),
    ("eps", lambda v: v > 0.1, "eps > 0.1"),
    ("min_pts", lambda v: v > 30, "min_pts > 30"),
    ("stage2_eps", lambda v: v is None or v > 0.1, "stage2_eps > 0.1"),
    ("stage2_min_pts", lambda v: v is None or v > 30, "stage2_min_pts > 30"),
    ("inlier_tol", _positive, "inlier_tol > 0"),
    ("msac_iterations", lambda v: v >= 1, "msac_iterations >= 1"),
    ("hazard_tol", _positive, "hazard_tol > 0"),
    ("sag_limit", _positive, "sag_limit > 0"),
    ("conductor_weight", lambda v: v is None or v > 0, "conductor_weight > 0"),
    ("corridor_mode", lambda v: v in (MODE_COMPLEX, MODE_OPEN),
     f"corridor_mode in ('{MODE_COMPLEX}', '{MODE_OPEN}')"),
    ("clearance", _positive, "clearance > 0"),
    ("r_override", lambda v: v is None or v > 0, "r_override > 0"),
]
