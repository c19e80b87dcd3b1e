"""End-to-end tying pipeline and batch evaluation helpers.

Stage order: pre-detect a coarse end-effector pose near one node, DBSCAN
the scene, pick the rebar cluster by reference-cloud overlap, extract
node crops with the orthogonality filter, refine the mat frame from the
crops, sort the nodes along (-y, +z, +x), and predict one tying pose per
node in that order. Every stage is timed and every stage error is
re-raised tagged with the stage name, so a half-finished run can never
look like an empty success.
"""

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clustering import (DbscanParams, cluster_points, dbscan,
                         extract_reference_cloud, select_rebar_cluster)
from .errors import ConfigError, NoCandidateNode, PipelineStageError, RebartieError
from .extraction import OrthoFilterParams, extract_nodes, orthogonal_feature_mask
from .geometry import Pose, pose_distance, pose_to_dict
from .metrics import EvalConfig, node_detection_rate
from .ordering import order_nodes, refine_frame
from .sampling import (AnnealSchedule, SamplerConfig, analytic_gaussian_score,
                       anneal_sample, predict_tying_pose)
from .scenes import PointCloud, RebarGridSpec, SceneSpec, generate_scene

__all__ = [
    "PipelineConfig",
    "PipelineResult",
    "pre_detect",
    "run_pipeline",
    "order_from_rebar",
    "result_to_dict",
    "evaluate_run",
    "evaluate_detection",
    "demo_conditions",
    "condition_spec",
    "run_scene",
    "run_batch",
    "aggregate_rows",
    "DEFAULT_NOISE_RANGE",
]

# Per-scene sensor jitter range in meters; batch noise conditions draw
# sigma uniformly from it.
DEFAULT_NOISE_RANGE = (0.0, 0.005)


@dataclass
class PipelineConfig:
    """Every pipeline tunable in one place.

    search_radius None falls back to the scene DBSCAN eps. approach is
    the world-frame tool approach direction used to stand the
    pre-detection target off its node; up seeds the frame's z pick.
    order_quantum is the coordinate bin width of the node sort (a
    quarter of the default grid spacing). backend forces the kernel
    implementation ("numba" or "numpy"); None picks automatically.
    """

    seed: int = 0
    up: tuple = (0.0, 0.0, 1.0)
    approach: tuple = (0.0, -1.0, 0.0)
    standoff: float = 0.3
    reference_radius: float = 0.4
    search_radius: float = None
    crop_radius: float = 0.09
    order_quantum: float = 0.05
    score_sigma_rot: float = 0.25
    score_sigma_trans: float = 0.25
    backend: str = None
    dbscan: DbscanParams = field(default_factory=lambda: DbscanParams(0.12, 10))
    split: DbscanParams = field(default_factory=lambda: DbscanParams(0.03, 8))
    filter: OrthoFilterParams = field(default_factory=OrthoFilterParams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if np.linalg.norm(self.up) <= 0.0:
            raise ConfigError("up must be a nonzero vector")
        if np.linalg.norm(self.approach) <= 0.0:
            raise ConfigError("approach must be a nonzero vector")
        if self.standoff <= 0.0:
            raise ConfigError("standoff must be > 0")
        if self.reference_radius <= 0.0:
            raise ConfigError("reference_radius must be > 0")
        if self.search_radius is not None and self.search_radius <= 0.0:
            raise ConfigError("search_radius must be > 0 or null")
        if self.crop_radius <= 0.0:
            raise ConfigError("crop_radius must be > 0")
        if self.order_quantum < 0.0:
            raise ConfigError("order_quantum must be >= 0")
        if self.score_sigma_rot <= 0.0 or self.score_sigma_trans <= 0.0:
            raise ConfigError("score sigmas must be > 0")
        if self.backend not in (None, "numba", "numpy"):
            raise ConfigError(f"unknown backend {self.backend!r}")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Copy with the master seed rewired into every seeded component."""
        return dataclasses.replace(
            self, seed=seed,
            filter=dataclasses.replace(self.filter, rng_seed=seed),
            sampler=dataclasses.replace(self.sampler, seed=seed))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["up"] = list(self.up)
        d["approach"] = list(self.approach)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return _config_from_dict(cls, data, "config")


# which config keys hold nested sub-configs, per owning dataclass
_NESTED = {
    (PipelineConfig, "dbscan"): DbscanParams,
    (PipelineConfig, "split"): DbscanParams,
    (PipelineConfig, "filter"): OrthoFilterParams,
    (PipelineConfig, "sampler"): SamplerConfig,
    (PipelineConfig, "eval"): EvalConfig,
    (SamplerConfig, "schedule"): AnnealSchedule,
}

_VECTORS = {"up", "approach"}


def _config_from_dict(cls, data, path):
    """Build a config dataclass from a plain dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}")
    kwargs = {}
    for key, value in data.items():
        sub = _NESTED.get((cls, key))
        if sub is not None:
            kwargs[key] = _config_from_dict(sub, value, f"{path}.{key}")
        elif key in _VECTORS:
            kwargs[key] = tuple(float(v) for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass
class PipelineResult:
    t_prev: Pose
    pose_prev: Pose
    labeling: object
    selected_cluster: int
    rebar_cloud: PointCloud
    ordered_nodes: object
    tying_poses: list
    timings: dict


def pre_detect(scene: PointCloud, tool: PointCloud, config: PipelineConfig):
    """Coarse first pose: sample toward the most central crossing-like point.

    The orthogonality mask marks crossing neighborhoods; the masked
    point nearest the scene centroid becomes the target node, the
    target pose stands standoff meters away along the approach
    direction, and the annealed sampler is run against the analytic
    score centered there. Returns (t_prev, pose_prev), which coincide
    here: the sampled pose is already the end-effector pose.
    """
    mask = orthogonal_feature_mask(scene, config.filter, backend=config.backend)
    if not mask.any():
        raise NoCandidateNode("no scene point passes the orthogonality mask")
    candidates = scene.points[mask]
    centroid = scene.points.mean(axis=0)
    best = int(np.argmin(np.linalg.norm(candidates - centroid[None, :], axis=1)))
    approach = np.asarray(config.approach, dtype=float)
    approach = approach / np.linalg.norm(approach)
    target = Pose(t=candidates[best] + config.standoff * approach)
    score = analytic_gaussian_score(target, config.score_sigma_rot,
                                    config.score_sigma_trans)
    t_prev, _ = anneal_sample(Pose.identity(), score, config.sampler, scene, tool)
    return t_prev, t_prev


def order_from_rebar(rebar: PointCloud, pose_prev: Pose, config: PipelineConfig):
    """Extraction half of the pipeline, starting from an isolated rebar cloud.

    Running this on the raw cloud of a clean, obstacle-free scene must
    give the same ordered nodes as the full pipeline, since clustering
    then selects the whole cloud.
    """
    nodes = extract_nodes(rebar, config.filter, config.split,
                          config.crop_radius, backend=config.backend)
    frame = refine_frame(nodes.crops, pose_prev, np.asarray(config.up, dtype=float))
    return order_nodes(nodes, frame, config.order_quantum)


def run_pipeline(scene: PointCloud, tool: PointCloud,
                 config: PipelineConfig) -> PipelineResult:
    """Full detection run over one scene. Deterministic given the config."""
    timings = {}
    t_start = time.perf_counter()

    def stage(name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except RebartieError as exc:
            raise PipelineStageError(name, exc) from exc
        timings[name] = (time.perf_counter() - t0) * 1000.0
        return out

    t_prev, pose_prev = stage("pre_detect", pre_detect, scene, tool, config)
    labeling = stage("cluster", dbscan, scene, config.dbscan,
                     backend=config.backend)

    def _select():
        reference = extract_reference_cloud(scene, pose_prev,
                                            config.reference_radius)
        radius = (config.search_radius if config.search_radius is not None
                  else config.dbscan.eps)
        picked = select_rebar_cluster(scene, labeling, reference, radius)
        return picked, cluster_points(scene, labeling, picked)

    selected, rebar = stage("select", _select)
    nodes = stage("extract", extract_nodes, rebar, config.filter, config.split,
                  config.crop_radius, backend=config.backend)
    frame = stage("frame", refine_frame, nodes.crops, pose_prev,
                  np.asarray(config.up, dtype=float))
    ordered = stage("order", order_nodes, nodes, frame, config.order_quantum)

    def _poses():
        return [predict_tying_pose(nodes.crops[i], frame, config.standoff)
                for i in ordered.order]

    tying = stage("poses", _poses)
    timings["total"] = (time.perf_counter() - t_start) * 1000.0
    return PipelineResult(t_prev=t_prev, pose_prev=pose_prev, labeling=labeling,
                          selected_cluster=selected, rebar_cloud=rebar,
                          ordered_nodes=ordered, tying_poses=tying,
                          timings=timings)


def result_to_dict(result: PipelineResult) -> dict:
    nodes = result.ordered_nodes.nodes
    frame = result.ordered_nodes.frame
    return {
        "t_prev": pose_to_dict(result.t_prev),
        "pose_prev": pose_to_dict(result.pose_prev),
        "selected_cluster": int(result.selected_cluster),
        "n_clusters": int(result.labeling.n_clusters),
        "frame": {
            "origin": [float(v) for v in frame.origin],
            "x": [float(v) for v in frame.x_axis],
            "y": [float(v) for v in frame.y_axis],
            "z": [float(v) for v in frame.z_axis],
        },
        "order": [int(i) for i in result.ordered_nodes.order],
        "centroids": nodes.centroids.tolist(),
        "centroids_frame": frame.to_frame(nodes.centroids).tolist(),
        "node_sizes": [int(s) for s in nodes.sizes],
        "tying_poses": [pose_to_dict(g) for g in result.tying_poses],
        "timings_ms": {k: float(v) for k, v in result.timings.items()},
    }


def evaluate_detection(centroids, order, tying_poses, truth,
                       config: EvalConfig) -> dict:
    """Score one scene's detections against its ground truth.

    Nodes are matched to truth greedily within match_radius. The visit
    order counts as correct only when every truth node is matched and
    the induced truth-index sequence equals the canonical order. Pose
    success is counted against the full truth node count, so missed
    nodes are failures; the mean pose error runs over matched pairs.
    """
    centroids = np.asarray(centroids, dtype=float).reshape(-1, 3)
    match = node_detection_rate(centroids, truth.node_positions,
                                config.match_radius)
    to_truth = {i: j for i, j in match.matches}
    n_truth = truth.node_positions.shape[0]
    order = [int(i) for i in order]
    order_correct = (
        len(match.matches) == n_truth
        and len(order) == n_truth
        and all(i in to_truth for i in order)
        and [to_truth[i] for i in order] == [int(i) for i in truth.canonical_order]
    )
    hits = 0
    dists = []
    for rank, det in enumerate(order):
        j = to_truth.get(det)
        if j is None:
            continue
        d = pose_distance(tying_poses[rank], truth.tying_poses[j], config.gamma,
                          config.squared_translation)
        dists.append(d)
        if d < config.t_g:
            hits += 1
    return {
        "n_detected": int(centroids.shape[0]),
        "n_truth": int(n_truth),
        "detection_rate": float(match.rate),
        "order_correct": bool(order_correct),
        "pose_success_rate": hits / n_truth,
        "mean_pose_error": float(np.mean(dists)) if dists else float("nan"),
    }


def evaluate_run(result: PipelineResult, truth, config: EvalConfig) -> dict:
    return evaluate_detection(result.ordered_nodes.nodes.centroids,
                              result.ordered_nodes.order, result.tying_poses,
                              truth, config)


def demo_conditions() -> list:
    """The stock benchmark table: node counts crossed with clutter and noise.

    Node counts map to grids 4=2x2, 8=2x4, 16=4x4, 32=4x4x2, 36=6x6;
    each of 4/8/16 appears clean, with 4 obstacles, and with per-scene
    noise drawn from DEFAULT_NOISE_RANGE; 32 and 36 run clean only.
    """
    shapes = {4: (2, 2, 1), 8: (2, 4, 1), 16: (4, 4, 1),
              32: (4, 4, 2), 36: (6, 6, 1)}
    conditions = []
    for n in (4, 8, 16):
        rows, cols, layers = shapes[n]
        base = {"rows": rows, "cols": cols, "layers": layers}
        conditions.append({"name": f"{n}n-clean", **base,
                           "n_obstacles": 0, "noise_sigma": 0.0})
        conditions.append({"name": f"{n}n-obst", **base,
                           "n_obstacles": 4, "noise_sigma": 0.0})
        conditions.append({"name": f"{n}n-noise", **base, "n_obstacles": 0,
                           "noise_sigma": DEFAULT_NOISE_RANGE})
    for n in (32, 36):
        rows, cols, layers = shapes[n]
        conditions.append({"name": f"{n}n-clean", "rows": rows, "cols": cols,
                           "layers": layers, "n_obstacles": 0,
                           "noise_sigma": 0.0})
    return conditions


def condition_spec(condition: dict, seed: int) -> SceneSpec:
    grid_keys = ("rows", "cols", "layers", "spacing", "bar_radius",
                 "points_per_meter")
    grid = RebarGridSpec(**{k: condition[k] for k in grid_keys if k in condition})
    sigma = condition.get("noise_sigma", 0.0)
    if isinstance(sigma, list):
        sigma = tuple(sigma)
    return SceneSpec(grid=grid, n_obstacles=condition.get("n_obstacles", 0),
                     noise_sigma=sigma, seed=seed)


def run_scene(condition: dict, seed: int, config: PipelineConfig) -> dict:
    """Generate one scene, run the pipeline, and score it.

    Stage failures are recorded as rows with zero detection instead of
    propagating, so batch statistics honestly count them as misses.
    """
    scene, tool, truth = generate_scene(condition_spec(condition, seed))
    cfg = config.with_seed(seed)
    row = {"condition": condition.get("name", ""), "seed": int(seed)}
    t0 = time.perf_counter()
    try:
        result = run_pipeline(scene, tool, cfg)
    except PipelineStageError as exc:
        row.update({
            "n_detected": 0, "n_truth": truth.node_positions.shape[0],
            "detection_rate": 0.0, "order_correct": False,
            "pose_success_rate": 0.0, "mean_pose_error": float("nan"),
            "total_ms": (time.perf_counter() - t0) * 1000.0,
            "error": f"{exc.stage}: {exc.cause}",
        })
        return row
    row.update(evaluate_run(result, truth, cfg.eval))
    row["total_ms"] = result.timings["total"]
    row["error"] = ""
    return row


def _scene_job(job):
    condition, seed, config = job
    return run_scene(condition, seed, config)


def run_batch(condition: dict, seeds, config: PipelineConfig,
              jobs: int = 1) -> list:
    """Score a condition over many seeds; rows come back in seed order."""
    jobs = max(1, int(jobs))
    work = [(condition, int(s), config) for s in seeds]
    if jobs == 1:
        return [_scene_job(j) for j in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_scene_job, work))


def aggregate_rows(rows: list) -> dict:
    """Batch summary; failed scenes already carry zero rates in their rows."""
    if not rows:
        raise ValueError("nothing to aggregate")
    errors = [r for r in rows if r["error"]]
    pose_errors = [r["mean_pose_error"] for r in rows
                   if np.isfinite(r["mean_pose_error"])]
    return {
        "scenes": len(rows),
        "failures": len(errors),
        "mean_detection_rate": float(np.mean([r["detection_rate"] for r in rows])),
        "order_correct_fraction": float(np.mean([bool(r["order_correct"])
                                                 for r in rows])),
        "mean_pose_success_rate": float(np.mean([r["pose_success_rate"]
                                                 for r in rows])),
        "mean_pose_error": float(np.mean(pose_errors)) if pose_errors
        else float("nan"),
        "mean_total_ms": float(np.mean([r["total_ms"] for r in rows])),
    }
