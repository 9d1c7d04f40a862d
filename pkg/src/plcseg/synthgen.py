"""Deterministic labeled scene generator used as ground truth in tests.

A scene is ground + catenary conductors + pylons + tree crowns, optionally
rotated about Z by a heading so the regularization stage has real work to
do. Conductor points are sampled exactly from z = a + c*cosh((y - b)/c)
before noise; noise draws are clipped to 4 sigma so constructed bounds are
guaranteed. All randomness flows through one seeded PCG64 generator in a
fixed order, making equal seeds produce bit-identical clouds.

Label codes: 0 ground, 1 vegetation, 2 pylon, 10+i conductor i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .cloud import PointCloud

LABEL_GROUND = 0
LABEL_VEGETATION = 1
LABEL_PYLON = 2
LABEL_CONDUCTOR_BASE = 10


def is_conductor(labels: np.ndarray) -> np.ndarray:
    return labels >= LABEL_CONDUCTOR_BASE


def conductor_index(labels: np.ndarray) -> np.ndarray:
    """Conductor ordinal per point; -1 for non-conductor points."""
    out = np.where(is_conductor(labels), labels - LABEL_CONDUCTOR_BASE, -1)
    return out.astype(np.int64)


@dataclass(frozen=True)
class TreeSpec:
    center: tuple[float, float]       # (x, y) of the trunk
    height: float                     # top of the crown
    crown_radius: float
    density: float                    # crown points per m^3


@dataclass(frozen=True)
class SceneSpec:
    area: tuple[float, float] = (30.0, 180.0)     # (x-extent, y-extent) [m]
    ground_density: float = 20.0                  # pts/m^2 when no fraction
    ground_fraction: float | None = 0.5           # target share of ground pts
    ground_roughness: float = 0.03                # z noise sigma [m]
    n_conductors: int = 3
    conductor_spacing: float = 2.0
    span_length: float = 80.0
    n_spans: int = 2
    span_gap: float = 5.0                         # data gap at each pylon
    span_params: tuple[tuple[float, float, float], ...] = ()  # (a, b, c)
    wire_point_spacing: float = 0.005
    wire_noise: float = 0.005
    trees: tuple[TreeSpec, ...] = ()
    pylon_height: float = 20.0
    heading_deg: float = 30.0
    rng_seed: int = 20240901
    y_margin: float = 7.5

    def __post_init__(self):
        if self.area[0] <= 0 or self.area[1] <= 0:
            raise ValueError("area extents must be positive")
        if self.ground_density <= 0:
            raise ValueError("ground_density must be positive")
        if self.ground_fraction is not None and not 0 < self.ground_fraction < 1:
            raise ValueError("ground_fraction must lie in (0, 1)")
        if self.n_conductors < 1 or self.n_spans < 1:
            raise ValueError("need at least one conductor and one span")
        if self.wire_point_spacing <= 0 or self.span_length <= 0:
            raise ValueError("wire spacing and span length must be positive")
        if len(self.span_params) != self.n_spans:
            raise ValueError("span_params must list (a, b, c) per span")
        for a, b, c in self.span_params:
            if c <= 0:
                raise ValueError("catenary parameter c must be positive")

    def span_start(self, s: int) -> float:
        return self.y_margin + s * (self.span_length + self.span_gap)

    def conductor_x(self, i: int) -> float:
        mid = 0.5 * self.area[0]
        return mid + (i - 0.5 * (self.n_conductors - 1)) * self.conductor_spacing

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        d = dict(d)
        d["area"] = tuple(d["area"])
        d["span_params"] = tuple(tuple(p) for p in d["span_params"])
        d["trees"] = tuple(
            TreeSpec(center=tuple(t["center"]), height=t["height"],
                     crown_radius=t["crown_radius"], density=t["density"])
            for t in d["trees"])
        return SceneSpec(**d)


def _clipped_normal(rng, sigma: float, size) -> np.ndarray:
    if sigma == 0:
        return np.zeros(size)
    return np.clip(rng.normal(0.0, sigma, size), -4.0 * sigma, 4.0 * sigma)


def _wire_points(spec: SceneSpec, rng) -> tuple[np.ndarray, np.ndarray]:
    pts = []
    labels = []
    for i in range(spec.n_conductors):
        x_i = spec.conductor_x(i)
        for s in range(spec.n_spans):
            a, b, c = spec.span_params[s]
            y0 = spec.span_start(s)
            y = y0 + np.arange(0.0, spec.span_length, spec.wire_point_spacing)
            z = a + c * np.cosh((y - b) / c)
            x = np.full_like(y, x_i)
            x = x + _clipped_normal(rng, spec.wire_noise, len(y))
            z = z + _clipped_normal(rng, spec.wire_noise, len(y))
            pts.append(np.column_stack([x, y, z]))
            labels.append(np.full(len(y), LABEL_CONDUCTOR_BASE + i))
    return np.concatenate(pts), np.concatenate(labels)


def _pylon_points(spec: SceneSpec, rng) -> np.ndarray:
    ys = [spec.span_start(0)]
    for s in range(1, spec.n_spans):
        ys.append(spec.span_start(s) - 0.5 * spec.span_gap)
    ys.append(spec.span_start(spec.n_spans - 1) + spec.span_length)
    x_mid = 0.5 * spec.area[0]
    x_lo = spec.conductor_x(0)
    x_hi = spec.conductor_x(spec.n_conductors - 1)
    cols = []
    for y in ys:
        zs = np.arange(0.0, spec.pylon_height, 0.25)
        mast = np.column_stack([np.full_like(zs, x_mid), np.full_like(zs, y), zs])
        xs = np.arange(x_lo - 0.5, x_hi + 0.5, 0.25)
        arm = np.column_stack([xs, np.full_like(xs, y),
                               np.full_like(xs, spec.pylon_height)])
        part = np.concatenate([mast, arm])
        part += _clipped_normal(rng, 0.02, part.shape)
        cols.append(part)
    return np.concatenate(cols)


def _tree_points(tree: TreeSpec, rng) -> np.ndarray:
    r = tree.crown_radius
    center = np.array([tree.center[0], tree.center[1], tree.height - r])
    volume = 4.0 / 3.0 * math.pi * r ** 3
    n = max(1, int(round(tree.density * volume)))
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = r * rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
    crown = center + direction * radius[:, None]
    trunk_top = max(tree.height - 2.0 * r, 0.3)
    zs = np.arange(0.15, trunk_top, 0.3)
    trunk = np.column_stack([np.full_like(zs, tree.center[0]),
                             np.full_like(zs, tree.center[1]), zs])
    trunk = trunk + _clipped_normal(rng, 0.02, trunk.shape)
    return np.concatenate([crown, trunk])


def generate(spec: SceneSpec) -> PointCloud:
    """Build the labeled scene cloud for a spec; same seed, same bits."""
    rng = np.random.default_rng(spec.rng_seed)
    wires, wire_labels = _wire_points(spec, rng)
    pylons = _pylon_points(spec, rng)
    tree_parts = [_tree_points(t, rng) for t in spec.trees]
    n_trees = sum(len(t) for t in tree_parts)
    n_other = len(wires) + len(pylons) + n_trees
    if spec.ground_fraction is not None:
        f = spec.ground_fraction
        n_ground = int(round(n_other * f / (1.0 - f)))
    else:
        n_ground = int(round(spec.ground_density * spec.area[0] * spec.area[1]))
    gx = rng.uniform(0.0, spec.area[0], n_ground)
    gy = rng.uniform(0.0, spec.area[1], n_ground)
    gz = rng.normal(0.0, spec.ground_roughness, n_ground)
    ground = np.column_stack([gx, gy, gz])

    parts = [ground, wires, pylons]
    labels = [np.full(n_ground, LABEL_GROUND), wire_labels,
              np.full(len(pylons), LABEL_PYLON)]
    for t in tree_parts:
        parts.append(t)
        labels.append(np.full(len(t), LABEL_VEGETATION))
    xyz = np.concatenate(parts)
    lab = np.concatenate(labels).astype(np.int64)

    if spec.heading_deg:
        theta = math.radians(spec.heading_deg)
        c, s = math.cos(theta), math.sin(theta)
        center = np.array([0.5 * spec.area[0], 0.5 * spec.area[1]])
        xy = xyz[:, :2] - center
        xyz[:, 0] = xy[:, 0] * c - xy[:, 1] * s + center[0]
        xyz[:, 1] = xy[:, 0] * s + xy[:, 1] * c + center[1]
    return PointCloud(xyz, lab)


def catenary_z(spec: SceneSpec, span: int, y: np.ndarray) -> np.ndarray:
    """Exact conductor elevation of one span at unrotated y-positions."""
    a, b, c = spec.span_params[span]
    return a + c * np.cosh((np.asarray(y) - b) / c)


# ---------------------------------------------------------------------------
# Canonical scenes
# ---------------------------------------------------------------------------

def default_spans(n_spans: int, span_length: float, span_gap: float,
                  c: float, vertex_height: float,
                  y_margin: float = 7.5) -> tuple[tuple[float, float, float], ...]:
    """Per-span (a, b, c) with the vertex centered in each span."""
    a = vertex_height - c
    out = []
    for s in range(n_spans):
        b = y_margin + s * (span_length + span_gap) + 0.5 * span_length
        out.append((a, b, c))
    return tuple(out)


def three_by_two_scene(seed: int = 20240901, **overrides) -> SceneSpec:
    """The canonical verification scene: 3 conductors x 2 spans of 80 m,
    c = 100 m, 2 m spacing, half the points on the ground, 6 trees,
    heading 30 degrees. One tree reaches within 2 m of a conductor."""
    trees = (
        TreeSpec(center=(18.2, 47.5), height=11.5, crown_radius=1.2, density=60.0),
        TreeSpec(center=(4.0, 25.0), height=8.0, crown_radius=2.0, density=14.0),
        TreeSpec(center=(25.0, 60.0), height=9.5, crown_radius=2.2, density=12.0),
        TreeSpec(center=(6.5, 100.0), height=7.0, crown_radius=1.8, density=14.0),
        TreeSpec(center=(23.5, 130.0), height=10.0, crown_radius=2.5, density=10.0),
        TreeSpec(center=(3.0, 160.0), height=6.0, crown_radius=1.5, density=16.0),
    )
    params = dict(
        area=(30.0, 180.0),
        ground_fraction=0.5,
        n_conductors=3,
        conductor_spacing=2.0,
        span_length=80.0,
        n_spans=2,
        span_gap=5.0,
        span_params=default_spans(2, 80.0, 5.0, c=100.0, vertex_height=12.0),
        wire_point_spacing=0.005,
        wire_noise=0.005,
        trees=trees,
        pylon_height=20.0,
        heading_deg=30.0,
        rng_seed=seed,
    )
    params.update(overrides)
    return SceneSpec(**params)


def million_point_scene(seed: int = 7) -> SceneSpec:
    """Benchmark scene: ~1M points over a ~4000 m^2 strip."""
    rng = np.random.default_rng(seed + 1)
    trees = []
    for k in range(46):
        side = 3.0 if k % 2 == 0 else 21.0
        y = 8.0 + (k // 2) * 7.0
        trees.append(TreeSpec(
            center=(side + float(rng.uniform(-1.5, 1.5)), y),
            height=float(rng.uniform(7.0, 12.0)),
            crown_radius=float(rng.uniform(1.8, 2.6)),
            density=160.0))
    return SceneSpec(
        area=(24.0, 168.0),
        ground_fraction=0.5,
        n_conductors=3,
        conductor_spacing=2.0,
        span_length=80.0,
        n_spans=2,
        span_gap=5.0,
        span_params=default_spans(2, 80.0, 5.0, c=100.0, vertex_height=12.0,
                                  y_margin=1.5),
        wire_point_spacing=0.005,
        wire_noise=0.005,
        trees=tuple(trees),
        pylon_height=20.0,
        heading_deg=30.0,
        rng_seed=seed,
        y_margin=1.5,
    )
