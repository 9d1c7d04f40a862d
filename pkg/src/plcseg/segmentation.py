"""Density-based clustering and the two-stage conductor segmentation.

``dbscan`` implements the classical semantics exactly: a core point has at
least ``min_pts`` points (itself included) within ``eps``; clusters are the
connected components of core points under eps-reachability; border points
join the first cluster that reaches them when seeds are visited in
ascending id order (equivalently: the lowest-indexed adjacent cluster);
everything else is noise. Two interchangeable internal strategies keep the
result exact while bounding memory: a pair-enumeration path for ordinary
densities and a grid-condensed path for pathologically dense projections.

``segment_power_lines`` applies it twice to a regularized cloud: first on
the XZ cross-section to separate parallel conductors, then along Y inside
each cluster to split spans at pylon gaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import KdIndex
from .errors import NoSegmentsError

NOISE = -1

#: switch to the grid-condensed strategy once the total neighbor count the
#: pair enumeration would materialize exceeds this many entries
_PAIR_ENTRY_BUDGET = 40_000_000

_FILTER_CHUNK = 4_000_000  # pair rows per canonical-distance filtering block


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class ClusterLabels:
    """Per-point cluster ids; -1 marks noise, clusters are 0..n_clusters-1."""

    labels: np.ndarray
    n_clusters: int

    def __len__(self) -> int:
        return len(self.labels)


def _embed3(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or not 1 <= pts.shape[1] <= 3:
        raise ValueError("points must be an (n, d) array with d in {1, 2, 3}")
    if pts.shape[1] == 3:
        return np.ascontiguousarray(pts)
    out = np.zeros((len(pts), 3))
    out[:, :pts.shape[1]] = pts
    return out


def _exact_core_mask(index: KdIndex, x3: np.ndarray, eps: float,
                     min_pts: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact core flags plus an upper-bound neighbor count per point."""
    ub = index.radius_counts(x3, eps)
    lb = index.radius_counts_lower(x3, eps)
    core = lb >= min_pts
    unsure = np.flatnonzero(~core & (ub >= min_pts))
    if unsure.size:
        # only points whose count straddles the 1-ulp search band
        for ids in np.array_split(unsure, max(1, unsure.size // 4096)):
            lists = index.radius_query_batch(x3[ids], eps)
            exact = np.fromiter((len(l) for l in lists), dtype=np.int64,
                                count=len(lists))
            core[ids] = exact >= min_pts
    return core, ub


def _grow_csr(labels: np.ndarray, core: np.ndarray,
              indptr: np.ndarray, indices: np.ndarray) -> int:
    cluster = 0
    for seed in np.flatnonzero(core):
        if labels[seed] != -2:
            continue
        labels[seed] = cluster
        frontier = np.array([seed], dtype=np.int64)
        while frontier.size:
            expand = frontier[core[frontier]]
            if expand.size == 0:
                break
            nbr = np.unique(np.concatenate(
                [indices[indptr[i]:indptr[i + 1]] for i in expand]))
            fresh = nbr[labels[nbr] == -2]
            labels[fresh] = cluster
            frontier = fresh
        cluster += 1
    return cluster


def _dbscan_pairs(x3: np.ndarray, index: KdIndex, core: np.ndarray,
                  eps: float) -> tuple[np.ndarray, int]:
    n = len(x3)
    pairs = index.pairs_within(eps, chunk=_FILTER_CHUNK)
    # symmetric CSR adjacency
    heads = np.concatenate([pairs[:, 0], pairs[:, 1]])
    tails = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.argsort(heads, kind="stable")
    heads, tails = heads[order], tails[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(heads, minlength=n), out=indptr[1:])
    labels = np.full(n, -2, dtype=np.int64)
    n_clusters = _grow_csr(labels, core, indptr, tails.astype(np.int64))
    labels[labels == -2] = NOISE
    return labels, n_clusters


def _min_cross_distance(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) * len(b) <= 4_000_000:
        d = a[:, None, :] - b[None, :, :]
        return float(np.sqrt((d * d).sum(axis=2)).min())
    from scipy.spatial import cKDTree
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    return float(cKDTree(small).query(big, k=1)[0].min())


def _dbscan_cells(x3: np.ndarray, dim: int, index: KdIndex, core: np.ndarray,
                  eps: float) -> tuple[np.ndarray, int]:
    """Grid-condensed exact DBSCAN for extremely dense point sets.

    All points falling in one grid cell of side eps/sqrt(d) are pairwise
    within eps, so core points of a cell share a cluster; connectivity is
    decided per nearby cell pair through the minimum cross distance.
    """
    n = len(x3)
    labels = np.full(n, -2, dtype=np.int64)
    coords = x3[:, :dim]
    side = eps / np.sqrt(dim) * (1.0 - 1e-12)
    cell_of = np.floor(coords / side).astype(np.int64)

    core_ids = np.flatnonzero(core)
    core_cells, cell_inverse = np.unique(cell_of[core_ids], axis=0,
                                         return_inverse=True)
    cell_inverse = cell_inverse.reshape(-1)
    n_cells = len(core_cells)
    order = np.argsort(cell_inverse, kind="stable")
    bounds = np.searchsorted(cell_inverse[order], np.arange(n_cells + 1))
    members = [core_ids[order[bounds[c]:bounds[c + 1]]]
               for c in range(n_cells)]
    cell_key = {tuple(c): i for i, c in enumerate(core_cells)}

    parent = np.arange(n_cells)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    reach = int(np.ceil(eps / side))
    offsets = np.stack(np.meshgrid(*([np.arange(-reach, reach + 1)] * dim),
                                   indexing="ij"), axis=-1).reshape(-1, dim)
    for ci, cell in enumerate(core_cells):
        for off in offsets:
            if not np.any(off):
                continue
            cj = cell_key.get(tuple(cell + off))
            if cj is None or cj <= ci:
                continue
            ri, rj = find(ci), find(cj)
            if ri == rj:
                continue
            gap = np.maximum((np.abs(off) - 1) * side, 0.0)
            if np.sqrt((gap * gap).sum()) > eps:
                continue
            if _min_cross_distance(coords[members[ci]],
                                   coords[members[cj]]) <= eps:
                parent[max(ri, rj)] = min(ri, rj)

    comp = np.array([find(i) for i in range(n_cells)])
    # order clusters by their minimal core id, mirroring sequential growth
    comp_min = {}
    for ci in range(n_cells):
        r = comp[ci]
        m = int(members[ci].min()) if len(members[ci]) else n
        comp_min[r] = min(comp_min.get(r, n), m)
    roots = sorted(comp_min, key=lambda r: comp_min[r])
    cluster_of_root = {r: k for k, r in enumerate(roots)}
    for ci in range(n_cells):
        labels[members[ci]] = cluster_of_root[comp[ci]]
    n_clusters = len(roots)

    # borders: lowest-indexed cluster among core points within eps
    non_core = np.flatnonzero(~core)
    if non_core.size and core_ids.size:
        core_index = KdIndex(x3[core_ids])
        core_cluster = labels[core_ids]
        for ids in np.array_split(non_core, max(1, non_core.size // 8192)):
            lists = core_index.radius_query_batch(x3[ids], eps)
            lens = np.fromiter((len(l) for l in lists), dtype=np.int64,
                               count=len(lists))
            hit = lens > 0
            if not hit.any():
                continue
            flat = np.concatenate([l for l in lists if len(l)])
            starts = np.zeros(int(hit.sum()), dtype=np.int64)
            np.cumsum(lens[hit][:-1], out=starts[1:])
            best = np.minimum.reduceat(core_cluster[flat], starts)
            labels[ids[hit]] = best
    labels[labels == -2] = NOISE
    return labels, n_clusters


def dbscan(points, params: DbscanParams) -> ClusterLabels:
    """Cluster 1- to 3-dimensional coordinates with exact DBSCAN semantics.

    Deterministic for a fixed input order; an all-noise outcome is valid.
    """
    x3 = _embed3(points)
    if len(x3) == 0:
        raise ValueError("points must be non-empty")
    dim = np.asarray(points).reshape(len(x3), -1).shape[1]
    index = KdIndex(x3)
    core, ub = _exact_core_mask(index, x3, params.eps, params.min_pts)
    if not core.any():
        return ClusterLabels(np.full(len(x3), NOISE, dtype=np.int64), 0)
    if int(ub.sum()) <= _PAIR_ENTRY_BUDGET:
        labels, n_clusters = _dbscan_pairs(x3, index, core, params.eps)
    else:
        labels, n_clusters = _dbscan_cells(x3, dim, index, core, params.eps)
    return ClusterLabels(labels, n_clusters)


# ---------------------------------------------------------------------------
# Two-stage conductor segmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLineSegment:
    """One conductor span: ids into the clustered cloud plus provenance."""

    segment_id: int
    point_ids: np.ndarray
    stage1_id: int
    stage2_id: int

    def __len__(self) -> int:
        return len(self.point_ids)


def segment_power_lines(regularized, stage1: DbscanParams,
                        stage2: DbscanParams) -> list[PowerLineSegment]:
    """Split a regularized candidate cloud into individual conductor spans.

    Stage 1 clusters the XZ cross-section (the plane orthogonal to the span
    direction), isolating parallel conductors; stage 2 clusters each result
    along Y alone, splitting at pylon/data gaps wider than eps. Noise from
    either stage is dropped. Raises :class:`NoSegmentsError` when nothing
    remains.
    """
    xyz = regularized.xyz
    if len(xyz) == 0:
        raise NoSegmentsError("no power line found: empty candidate cloud")
    cross = dbscan(xyz[:, [0, 2]], stage1)
    segments: list[PowerLineSegment] = []
    for c in range(cross.n_clusters):
        ids = np.flatnonzero(cross.labels == c)
        along = dbscan(xyz[ids, 1], stage2)
        for s in range(along.n_clusters):
            member = ids[along.labels == s]
            segments.append(PowerLineSegment(
                segment_id=len(segments), point_ids=member,
                stage1_id=c, stage2_id=s))
    if not segments:
        raise NoSegmentsError("no power line found")
    return segments


def segment_summary(segment: PowerLineSegment, xyz: np.ndarray) -> dict:
    """Reporting block for one segment: size, centroid, bounding box."""
    pts = xyz[segment.point_ids]
    return {
        "segment_id": segment.segment_id,
        "stage1_id": segment.stage1_id,
        "stage2_id": segment.stage2_id,
        "point_count": int(len(pts)),
        "centroid": pts.mean(axis=0).tolist(),
        "bbox_min": pts.min(axis=0).tolist(),
        "bbox_max": pts.max(axis=0).tolist(),
    }
