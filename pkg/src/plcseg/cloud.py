"""Point-cloud container, xyz file I/O, and the exact 3D spatial index.

The index wraps a balanced kd-tree (median split along the widest axis,
leaf buckets of 16 points by default) and re-checks every candidate with
the canonical Euclidean predicate so that ``knn`` and ``radius_query``
agree bit-for-bit with a brute-force scan, including the tie rule
(equal distances resolve to the lower point id) and the inclusive
``distance <= r`` boundary.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParseError

FORMAT_ASCII = "xyz-ascii"
FORMAT_BINARY = "xyz-binary"
FORMATS = (FORMAT_ASCII, FORMAT_BINARY)

#: relative inflation applied to kd-tree pre-search radii so the canonical
#: re-check never misses a boundary point to 1-ulp rounding differences
_RADIUS_SLACK = 1e-9


def n_workers() -> int:
    """Worker count for parallel tree queries; capped by PLCSEG_THREADS."""
    env = os.environ.get("PLCSEG_THREADS")
    if env:
        try:
            cap = int(env)
        except ValueError:
            cap = 0
        if cap >= 1:
            return cap
    return -1  # scipy convention: use all cores


def as_point(q) -> np.ndarray:
    """Coerce a query point to a finite (3,) float64 array."""
    p = np.asarray(q, dtype=np.float64).reshape(-1)
    if p.shape != (3,):
        raise ValueError(f"expected a 3D point, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


@dataclass(frozen=True)
class PointCloud:
    """Ordered 3D points with optional per-point integer labels.

    ``xyz`` is an (n, 3) float64 array; ``labels`` is either ``None`` or an
    (n,) int64 array. Instances are treated as immutable values: all
    operations return new clouds and never write into ``xyz``.
    """

    xyz: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must have shape (n, 3), got {xyz.shape}")
        object.__setattr__(self, "xyz", xyz)
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if labels.shape != (len(xyz),):
                raise ValueError(
                    f"labels length {labels.shape} does not match {len(xyz)} points")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def z(self) -> np.ndarray:
        return self.xyz[:, 2]

    def select(self, ids) -> "PointCloud":
        """New cloud with the rows picked by an index array or boolean mask."""
        ids = np.asarray(ids)
        labels = None if self.labels is None else self.labels[ids]
        return PointCloud(self.xyz[ids], labels)

    def with_labels(self, labels) -> "PointCloud":
        return PointCloud(self.xyz, labels)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        """(min, max) corners; raises on an empty cloud."""
        if len(self) == 0:
            raise ValueError("empty cloud has no bounding box")
        return self.xyz.min(axis=0), self.xyz.max(axis=0)

    def xy_area(self) -> float:
        """Area of the XY bounding box in square meters."""
        lo, hi = self.bbox()
        return float((hi[0] - lo[0]) * (hi[1] - lo[1]))


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _check_format(fmt: str):
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; use one of {FORMATS}")


def read_cloud(path, fmt: str = FORMAT_ASCII) -> PointCloud:
    """Read a cloud from an xyz file.

    ascii: one whitespace-separated ``x y z`` (or ``x y z label``) triple per
    line, ``#`` starts a comment line. binary: consecutive 24-byte records of
    three little-endian float64 values.
    """
    _check_format(fmt)
    path = Path(path)
    if not path.exists():
        raise ParseError("file not found", path=path)
    if fmt == FORMAT_BINARY:
        return _read_binary(path)
    return _read_ascii(path)


def _read_binary(path: Path) -> PointCloud:
    raw = np.fromfile(path, dtype="<f8")
    if raw.size % 3 != 0:
        raise ParseError(
            "truncated record: file size is not a multiple of 24 bytes",
            path=path, offset=(raw.size - raw.size % 3) * 8)
    xyz = raw.reshape(-1, 3)
    bad = ~np.isfinite(xyz)
    if bad.any():
        rec = int(np.flatnonzero(bad.any(axis=1))[0])
        raise ParseError(
            f"non-finite coordinate in record {rec}", path=path, offset=rec * 24)
    return PointCloud(xyz)


def _read_ascii(path: Path) -> PointCloud:
    rows = []
    labels = []
    ncols = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if ncols is None:
                if len(parts) not in (3, 4):
                    raise ParseError(
                        f"expected 3 or 4 columns, got {len(parts)}",
                        path=path, line=lineno)
                ncols = len(parts)
            elif len(parts) != ncols:
                raise ParseError(
                    f"inconsistent column count ({len(parts)} vs {ncols})",
                    path=path, line=lineno)
            try:
                x, y, z = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError("malformed coordinate", path=path, line=lineno)
            if not (np.isfinite(x) and np.isfinite(y) and np.isfinite(z)):
                raise ParseError("non-finite coordinate", path=path, line=lineno)
            rows.append((x, y, z))
            if ncols == 4:
                try:
                    labels.append(int(parts[3]))
                except ValueError:
                    raise ParseError("malformed label", path=path, line=lineno)
    xyz = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    return PointCloud(xyz, np.asarray(labels, dtype=np.int64) if labels else None)


def write_cloud(cloud: PointCloud, path, fmt: str = FORMAT_ASCII) -> None:
    """Write a cloud; ascii keeps 17 significant digits, binary is bit-exact.

    Labeled clouds become 4-column ascii. The binary format stores
    coordinates only (labels travel in a sidecar file, see `plcseg synth`).
    """
    _check_format(fmt)
    path = Path(path)
    try:
        if fmt == FORMAT_BINARY:
            np.ascontiguousarray(cloud.xyz, dtype="<f8").tofile(path)
            return
        with open(path, "w") as fh:
            if cloud.labels is None:
                for x, y, z in cloud.xyz:
                    fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
            else:
                for (x, y, z), lab in zip(cloud.xyz, cloud.labels):
                    fh.write(f"{x:.17g} {y:.17g} {z:.17g} {lab:d}\n")
    except OSError as exc:
        raise ParseError(f"write failed: {exc}", path=path)


# ---------------------------------------------------------------------------
# Spatial index
# ---------------------------------------------------------------------------

class KdIndex:
    """Immutable kd-tree over a point set with exact, deterministic queries.

    Query results are defined purely by the canonical Euclidean distance
    ``sqrt(dx^2 + dy^2 + dz^2)`` computed in float64: ``radius_query`` returns
    exactly the ids with distance <= r, and ``knn`` the k nearest with equal
    distances broken by the lower id. Safe for concurrent reads.
    """

    def __init__(self, xyz: np.ndarray, bucket_size: int = 16):
        if len(xyz) == 0:
            raise ValueError("cannot index an empty cloud")
        if bucket_size < 1:
            raise ValueError("bucket_size must be positive")
        self.xyz = np.ascontiguousarray(xyz, dtype=np.float64)
        self.bucket_size = int(bucket_size)
        # median split on the widest axis => balanced, deterministic layout
        self._tree = cKDTree(self.xyz, leafsize=self.bucket_size,
                             balanced_tree=True, copy_data=False)

    def __len__(self) -> int:
        return len(self.xyz)

    def _dist(self, ids: np.ndarray, q: np.ndarray) -> np.ndarray:
        d = self.xyz[ids] - q
        return np.sqrt((d * d).sum(axis=1))

    def knn(self, q, k: int) -> list[tuple[int, float]]:
        """The k nearest points to q as (id, distance), ascending.

        Equal distances are ordered by lower id. Raises when k exceeds the
        number of indexed points.
        """
        q = as_point(q)
        n = len(self)
        if not 1 <= k <= n:
            raise ValueError(f"k={k} out of range for {n} indexed points")
        d, _ = self._tree.query(q, k=k)
        dk = float(np.max(d)) if k > 1 else float(d)
        ids = np.asarray(self._tree.query_ball_point(
            q, dk * (1.0 + _RADIUS_SLACK) + 1e-300), dtype=np.int64)
        dist = self._dist(ids, q)
        order = np.lexsort((ids, dist))
        ids, dist = ids[order][:k], dist[order][:k]
        return [(int(i), float(r)) for i, r in zip(ids, dist)]

    def radius_query(self, q, r: float) -> np.ndarray:
        """Ids of all points with Euclidean distance <= r, ascending by id."""
        q = as_point(q)
        if r < 0:
            raise ValueError("radius must be non-negative")
        cand = np.asarray(self._tree.query_ball_point(
            q, r * (1.0 + _RADIUS_SLACK) + 1e-300), dtype=np.int64)
        if cand.size == 0:
            return cand
        keep = cand[self._dist(cand, q) <= r]
        return np.sort(keep)

    # -- batch variants used by the pipeline stages ------------------------

    def knn_batch(self, pts: np.ndarray, k: int,
                  workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Distances and ids of the k nearest neighbors for many queries.

        Fast path over the per-point ``knn``: boundary ties follow the tree
        order instead of the id rule, which no caller of the batch API
        depends on.
        """
        if not 1 <= k <= len(self):
            raise ValueError(f"k={k} out of range for {len(self)} indexed points")
        w = n_workers() if workers is None else workers
        d, i = self._tree.query(pts, k=k, workers=w)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return d, i

    def nearest(self, pts: np.ndarray,
                workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Distance to and id of the closest indexed point, per query row."""
        d, i = self.knn_batch(pts, k=1, workers=workers)
        return d[:, 0], i[:, 0]

    def radius_counts(self, pts: np.ndarray, r: float,
                      slack: float = _RADIUS_SLACK) -> np.ndarray:
        """Upper-bound neighbor counts within r (radius inflated by slack)."""
        return self._tree.query_ball_point(
            pts, r * (1.0 + slack) + 1e-300, workers=n_workers(),
            return_length=True)

    def radius_counts_lower(self, pts: np.ndarray, r: float) -> np.ndarray:
        """Lower-bound neighbor counts within r (radius deflated)."""
        return self._tree.query_ball_point(
            pts, max(r * (1.0 - _RADIUS_SLACK) - 1e-300, 0.0),
            workers=n_workers(), return_length=True)

    def radius_query_batch(self, pts: np.ndarray, r: float) -> list[np.ndarray]:
        """Exact inclusive radius query for each row of ``pts``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        lists = self._tree.query_ball_point(
            pts, r * (1.0 + _RADIUS_SLACK) + 1e-300, workers=n_workers())
        out = []
        for q, ids in zip(pts, lists):
            ids = np.asarray(ids, dtype=np.int64)
            if ids.size:
                ids = np.sort(ids[self._dist(ids, q) <= r])
            out.append(ids)
        return out

    def pairs_within(self, r: float, chunk: int = 4_000_000) -> np.ndarray:
        """All index pairs (i < j) with canonical distance <= r, as (m, 2)."""
        pairs = self._tree.query_pairs(
            r * (1.0 + _RADIUS_SLACK) + 1e-300, output_type="ndarray")
        if pairs.size == 0:
            return pairs.reshape(0, 2).astype(np.int64)
        kept = []
        for lo in range(0, len(pairs), chunk):
            block = pairs[lo:lo + chunk]
            d = self.xyz[block[:, 0]] - self.xyz[block[:, 1]]
            kept.append(block[np.sqrt((d * d).sum(axis=1)) <= r])
        return np.concatenate(kept).astype(np.int64)


def build_index(cloud: PointCloud, bucket_size: int = 16) -> KdIndex:
    """Build the spatial index over a non-empty cloud."""
    if len(cloud) == 0:
        raise ValueError("cannot build an index over an empty cloud")
    return KdIndex(cloud.xyz, bucket_size=bucket_size)
