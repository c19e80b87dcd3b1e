"""Synthetic rebar-grid scenes with ground-truth nodes and tying poses.

A scene is a horizontal mat of crossing cylinders: per layer, one bar
set runs along +x and an orthogonal set along +y, with coplanar axes so
every crossing is a well-defined intersection point (a tying node).
Layers stack along +z. Optional box/sphere obstacles play the role of
background clutter and are kept away from the nodes. All randomness
flows from a single numpy Generator seeded by the scene spec, so equal
specs produce bit-identical clouds.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DegenerateAxis, SpecInvalid
from .geometry import Pose, apply_pose, compose, quat_rotate
from .ordering import quantized_lex_order

__all__ = [
    "PointCloud",
    "RebarGridSpec",
    "SceneSpec",
    "GroundTruth",
    "generate_bar",
    "generate_scene",
    "add_gaussian_noise",
    "apply_rigid_transform",
    "make_tool_template",
]

# Bars extend past the outermost crossing by this much (meters), so that
# boundary nodes still sit on full crosses.
BAR_OVERHANG = 0.15

# Default vertical pitch between layers, as a fraction of the grid spacing.
LAYER_GAP_FACTOR = 0.6

REBAR_COLOR = (150, 88, 55)
OBSTACLE_COLOR = (110, 110, 118)


@dataclass
class PointCloud:
    """Points of shape (N, 3) float64 plus optional (N, 3) uint8 colors."""

    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if self.colors.shape[0] != self.points.shape[0]:
                raise ValueError("colors and points must have equal length")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class RebarGridSpec:
    """Geometry of one rebar mat.

    rows bars run along +x (at distinct y positions), cols bars run
    along +y, giving rows*cols crossings per layer and layers copies
    stacked along +z. Row and column bars carry different gauges, as
    mats pair main bars with thinner distribution bars; cross_bar_radius
    None defaults to two thirds of bar_radius. bar_length None means
    each bar spans its grid extent plus BAR_OVERHANG on both ends.
    layer_gap None defaults to LAYER_GAP_FACTOR * spacing.
    """

    rows: int = 2
    cols: int = 2
    layers: int = 1
    spacing: float = 0.2
    bar_radius: float = 0.006
    cross_bar_radius: Optional[float] = None
    bar_length: Optional[float] = None
    layer_gap: Optional[float] = None
    points_per_meter: float = 1000.0
    scene_pose: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.layers < 1:
            raise SpecInvalid("rows, cols and layers must all be >= 1")
        if self.bar_radius <= 0.0:
            raise SpecInvalid("bar_radius must be > 0")
        if self.cross_bar_radius is not None and self.cross_bar_radius <= 0.0:
            raise SpecInvalid("cross_bar_radius must be > 0")
        if self.spacing <= 2.0 * max(self.bar_radius, self.effective_cross_radius()):
            raise SpecInvalid(
                f"spacing {self.spacing} must exceed twice the bar radius "
                f"{self.bar_radius}")
        if self.points_per_meter <= 0.0:
            raise SpecInvalid("points_per_meter must be > 0")
        extent = (max(self.rows, self.cols) - 1) * self.spacing
        if self.bar_length is not None and self.bar_length < extent:
            raise SpecInvalid("bar_length shorter than the grid extent")
        gap = self.effective_layer_gap()
        if self.layers > 1 and gap <= 2.0 * self.bar_radius:
            raise SpecInvalid("layer_gap must exceed the bar diameter")

    def effective_layer_gap(self) -> float:
        return self.layer_gap if self.layer_gap is not None else LAYER_GAP_FACTOR * self.spacing

    def effective_cross_radius(self) -> float:
        return self.cross_bar_radius if self.cross_bar_radius is not None \
            else self.bar_radius * 2.0 / 3.0

    def node_count(self) -> int:
        return self.rows * self.cols * self.layers


@dataclass
class SceneSpec:
    """Full scene recipe: grid, clutter, noise and the RNG seed.

    noise_sigma may be a fixed value in meters or a (lo, hi) pair, in
    which case the actual sigma is drawn uniformly per scene. standoff
    is the tool approach offset baked into the ground-truth tying poses.
    """

    grid: RebarGridSpec = field(default_factory=RebarGridSpec)
    n_obstacles: int = 0
    obstacle_size_range: tuple = (0.05, 0.12)
    noise_sigma: Union[float, tuple] = 0.0
    seed: int = 0
    standoff: float = 0.3

    def __post_init__(self):
        if self.n_obstacles < 0:
            raise SpecInvalid("n_obstacles must be >= 0")
        lo, hi = self.obstacle_size_range
        if not (0.0 < lo <= hi):
            raise SpecInvalid("obstacle_size_range must satisfy 0 < lo <= hi")
        sig = self.noise_sigma
        if isinstance(sig, (tuple, list)):
            slo, shi = sig
            if slo < 0.0 or shi < slo:
                raise SpecInvalid("noise_sigma range must satisfy 0 <= lo <= hi")
        elif sig < 0.0:
            raise SpecInvalid("noise_sigma must be >= 0")
        if self.standoff <= 0.0:
            raise SpecInvalid("standoff must be > 0")


@dataclass
class GroundTruth:
    """Node positions, tying poses and the canonical visiting order."""

    node_positions: np.ndarray
    tying_poses: list
    canonical_order: list
    up_axis: np.ndarray
    meta: dict = field(default_factory=dict)


def generate_bar(origin, axis, length: float, radius: float, density: float,
                 rng: np.random.Generator) -> PointCloud:
    """Sample round(density * length) points on a cylinder surface.

    Points are uniform in axial position and circumferential angle. The
    axis direction must have non-negligible length.
    """
    origin = np.asarray(origin, dtype=float)
    axis = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(axis)
    if norm <= 1e-6:
        raise DegenerateAxis(f"axis norm {norm} too small")
    a = axis / norm
    ref = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(a, ref)
    u /= np.linalg.norm(u)
    w = np.cross(a, u)
    n = int(round(density * length))
    s = rng.uniform(0.0, length, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    pts = (origin[None, :]
           + s[:, None] * a[None, :]
           + radius * np.cos(phi)[:, None] * u[None, :]
           + radius * np.sin(phi)[:, None] * w[None, :])
    return PointCloud(pts)


def add_gaussian_noise(cloud: PointCloud, sigma: float,
                       rng: np.random.Generator) -> PointCloud:
    """Add isotropic N(0, sigma^2) jitter; sigma == 0 returns the input."""
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0.0:
        return cloud
    return PointCloud(cloud.points + rng.normal(0.0, sigma, cloud.points.shape),
                      cloud.colors)


def apply_rigid_transform(cloud: PointCloud, g: Pose) -> PointCloud:
    return PointCloud(apply_pose(g, cloud.points), cloud.colors)


def make_tool_template(density: float = 1000.0) -> PointCloud:
    """Fixed template cloud for the tying-gun tip.

    Tool frame convention: +y is the forward (approach) axis, +z is up.
    The template is a barrel cylinder extending backward along -y plus a
    short jaw crossbar at the tip, sampled with a fixed internal seed so
    every call returns the same cloud.
    """
    rng = np.random.default_rng(715517)
    barrel = generate_bar(np.array([0.0, -0.12, 0.0]), np.array([0.0, 1.0, 0.0]),
                          0.12, 0.008, density, rng)
    jaw = generate_bar(np.array([-0.025, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]),
                       0.05, 0.005, density, rng)
    pts = np.vstack([barrel.points, jaw.points])
    colors = np.full((pts.shape[0], 3), 200, dtype=np.uint8)
    return PointCloud(pts, colors)


def _grid_layout(grid: RebarGridSpec):
    """Local node positions, bar origins/axes/lengths, in generation order."""
    sp = grid.spacing
    gap = grid.effective_layer_gap()
    ys = (np.arange(grid.rows) - (grid.rows - 1) / 2.0) * sp
    xs = (np.arange(grid.cols) - (grid.cols - 1) / 2.0) * sp
    zs = (np.arange(grid.layers) - (grid.layers - 1) / 2.0) * gap
    if grid.bar_length is None:
        len_x = (grid.cols - 1) * sp + 2.0 * BAR_OVERHANG
        len_y = (grid.rows - 1) * sp + 2.0 * BAR_OVERHANG
    else:
        len_x = len_y = grid.bar_length
    r_cross = grid.effective_cross_radius()
    bars = []
    for z in zs:
        for y in ys:
            bars.append((np.array([-len_x / 2.0, y, z]), np.array([1.0, 0.0, 0.0]),
                         len_x, grid.bar_radius))
        for x in xs:
            bars.append((np.array([x, -len_y / 2.0, z]), np.array([0.0, 1.0, 0.0]),
                         len_y, r_cross))
    nodes = np.array([[x, y, z] for z in zs for y in ys for x in xs])
    return nodes, bars, xs, ys, zs


def _sample_box(center, size, n, rng):
    """Uniform points on the surface of an axis-aligned cube."""
    half = size / 2.0
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-half, half, (n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    for d in range(3):
        sel = axis == d
        others = [o for o in range(3) if o != d]
        pts[sel, d] = sign[sel] * half
        pts[sel, others[0]] = uv[sel, 0]
        pts[sel, others[1]] = uv[sel, 1]
    return pts + np.asarray(center)[None, :]


def _sample_sphere(center, size, n, rng):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(center)[None, :] + (size / 2.0) * v


def _point_to_segments_min_dist(p, bars):
    best = np.inf
    for origin, axis, length, _radius in bars:
        d = p - origin
        s = float(np.clip(np.dot(d, axis), 0.0, length))
        best = min(best, float(np.linalg.norm(d - s * axis)))
    return best


def generate_scene(spec: SceneSpec):
    """Build (scene cloud, tool cloud, ground truth) from a scene spec.

    Ground-truth tying poses sit standoff meters behind each node along
    the mat frame's -y axis, with the tool forward axis aligned to +y
    and tool up to +z of the mat frame; everything is then mapped to
    world coordinates by grid.scene_pose.
    """
    grid = spec.grid
    rng = np.random.default_rng(spec.seed)
    nodes_local, bars, xs, ys, zs = _grid_layout(grid)

    # linear density scales with radius so the surface density stays
    # uniform across gauges, like a real scan
    parts = []
    for origin, axis, length, radius in bars:
        density = grid.points_per_meter * radius / grid.bar_radius
        parts.append(generate_bar(origin, axis, length, radius,
                                  density, rng).points)
    rebar_pts = np.vstack(parts)
    colors = [np.tile(np.array(REBAR_COLOR, dtype=np.uint8), (rebar_pts.shape[0], 1))]
    all_pts = [rebar_pts]

    # clutter: surface density matched to the bars' apparent density
    area_density = grid.points_per_meter / (2.0 * math.pi * grid.bar_radius)
    span_x = (xs[-1] - xs[0]) / 2.0 + 0.5 if len(xs) > 1 else 0.5
    span_y = (ys[-1] - ys[0]) / 2.0 + 0.5 if len(ys) > 1 else 0.5
    lo, hi = spec.obstacle_size_range
    for _ in range(spec.n_obstacles):
        kind = "box" if rng.random() < 0.5 else "sphere"
        size = rng.uniform(lo, hi)
        circum = size * (math.sqrt(3.0) / 2.0 if kind == "box" else 0.5)
        placed = False
        for _attempt in range(1000):
            center = np.array([
                rng.uniform(-span_x, span_x),
                rng.uniform(-span_y, span_y),
                rng.uniform(zs[0] - 0.45, zs[0] - 0.15),
            ])
            if np.min(np.linalg.norm(nodes_local - center[None, :], axis=1)) \
                    < 2.0 * grid.spacing + circum:
                continue
            # 0.18 keeps obstacle surfaces outside the scene-scale DBSCAN
            # eps so clutter never bridges into the rebar cluster
            if _point_to_segments_min_dist(center, bars) < circum + 0.18:
                continue
            placed = True
            break
        if not placed:
            raise SpecInvalid("could not place an obstacle clear of the grid")
        area = 6.0 * size * size if kind == "box" else math.pi * size * size
        n = max(1, int(area * area_density))
        obs = _sample_box(center, size, n, rng) if kind == "box" \
            else _sample_sphere(center, size, n, rng)
        all_pts.append(obs)
        colors.append(np.tile(np.array(OBSTACLE_COLOR, dtype=np.uint8), (n, 1)))

    cloud = PointCloud(np.vstack(all_pts), np.vstack(colors))
    cloud = apply_rigid_transform(cloud, grid.scene_pose)

    sig = spec.noise_sigma
    if isinstance(sig, (tuple, list)):
        sigma = float(rng.uniform(sig[0], sig[1]))
    else:
        sigma = float(sig)
    cloud = add_gaussian_noise(cloud, sigma, rng)

    order = quantized_lex_order(nodes_local, grid.spacing / 4.0)
    poses = []
    for p in nodes_local:
        local = Pose(t=p - np.array([0.0, spec.standoff, 0.0]))
        poses.append(compose(grid.scene_pose, local))
    nodes_world = apply_pose(grid.scene_pose, nodes_local)
    up = quat_rotate(grid.scene_pose.q, np.array([0.0, 0.0, 1.0]))
    truth = GroundTruth(
        node_positions=nodes_world,
        tying_poses=poses,
        canonical_order=list(order),
        up_axis=up,
        meta={"noise_sigma": sigma, "standoff": spec.standoff,
              "spacing": grid.spacing, "node_count": grid.node_count()},
    )
    tool = make_tool_template(grid.points_per_meter)
    return cloud, tool, truth
