"""Ground removal via a height histogram.

Elevations are binned into ``nbin`` equal bins over the full z-range; the
most populous bin whose center lies in the lower half of the range is taken
as the ground mode. Everything at or below its upper edge plus ``beta``
is removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import NoCandidatesError


@dataclass(frozen=True)
class ElevationFilterParams:
    nbin: int
    beta: float

    def __post_init__(self):
        if self.nbin < 2:
            raise ValueError("nbin must be >= 2")
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass(frozen=True)
class ElevationReport:
    ground_z: float
    cut_z: float
    removed_fraction: float

    def to_dict(self) -> dict:
        return {"ground_z": self.ground_z, "cut_z": self.cut_z,
                "removed_fraction": self.removed_fraction}


def filter_high_elevation(
        cloud: PointCloud,
        params: ElevationFilterParams) -> tuple[PointCloud, ElevationReport]:
    """Keep only the points strictly above the estimated ground level + beta.

    Input order is preserved. Raises :class:`NoCandidatesError` when nothing
    survives (a cloud with no elevated structure), including the degenerate
    zero-z-extent case where every point shares one bin.
    """
    if len(cloud) == 0:
        raise ValueError("cannot filter an empty cloud")
    z = cloud.z
    z_min, z_max = float(z.min()), float(z.max())
    if z_max == z_min:
        # single-bin cloud: ground estimate equals the whole range
        ground_z = z_max
    else:
        counts, edges = np.histogram(z, bins=params.nbin, range=(z_min, z_max))
        centers = 0.5 * (edges[:-1] + edges[1:])
        lower = centers <= z_min + 0.5 * (z_max - z_min)
        masked = np.where(lower, counts, -1)
        ground_bin = int(np.argmax(masked))  # ties resolve to the lowest bin
        ground_z = float(edges[ground_bin + 1])
    cut_z = ground_z + params.beta
    mask = z > cut_z
    kept = int(mask.sum())
    if kept == 0:
        raise NoCandidatesError(
            f"no high-elevation points above cut z={cut_z:.3f}")
    report = ElevationReport(
        ground_z=ground_z, cut_z=cut_z,
        removed_fraction=1.0 - kept / len(cloud))
    return cloud.select(mask), report


def elevation_mask(cloud: PointCloud, report: ElevationReport) -> np.ndarray:
    """Boolean mask of the points a filter run retained (z > cut_z)."""
    return cloud.z > report.cut_z
