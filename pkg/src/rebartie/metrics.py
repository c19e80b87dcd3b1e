"""Success-rate, error and detection metrics over predicted tying poses.

The pose metric everywhere is D_g = ||t1 - t2|| + gamma * theta_q with
theta_q the quaternion angle; success counts strict D_g < T_g. Demo
collections are lists of demos, each a list of poses, and predictions
must mirror the ground-truth shape exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .geometry import pose_distance

__all__ = [
    "EvalConfig",
    "EvalReport",
    "MatchResult",
    "success_rate",
    "prediction_error",
    "evaluate_demos",
    "node_detection_rate",
    "sweep_thresholds",
]


@dataclass
class EvalConfig:
    gamma: float = 1.0
    t_g: float = 0.1
    match_radius: float = 0.1
    squared_translation: bool = False

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")
        if self.t_g <= 0.0:
            raise ValueError("t_g must be > 0")
        if self.match_radius <= 0.0:
            raise ValueError("match_radius must be > 0")


@dataclass
class EvalReport:
    """Success rate and mean error over a demo collection, with the
    per-demo breakdown kept for reporting."""

    r_s: float
    e_r: float
    per_demo: list

    def to_dict(self) -> dict:
        return {"r_s": self.r_s, "e_r": self.e_r, "per_demo": self.per_demo}


@dataclass
class MatchResult:
    """rate: matched truth fraction. matches: (detected, truth) index
    pairs. degenerate: set when either input was empty."""

    rate: float
    matches: list = field(default_factory=list)
    degenerate: bool = False


def _check_shapes(predictions, truths):
    if len(predictions) != len(truths) or len(predictions) == 0:
        raise ShapeMismatch(
            f"{len(predictions)} prediction demos vs {len(truths)} truth demos")
    for i, (p, t) in enumerate(zip(predictions, truths)):
        if len(p) != len(t) or len(t) == 0:
            raise ShapeMismatch(
                f"demo {i}: {len(p)} predictions vs {len(t)} truths")


def _demo_distances(predictions, truths, gamma, squared):
    return [[pose_distance(p, t, gamma, squared) for p, t in zip(dp, dt)]
            for dp, dt in zip(predictions, truths)]


def success_rate(predictions, truths, config: EvalConfig) -> float:
    """Mean over demos of the fraction of poses with D_g < t_g (strict)."""
    _check_shapes(predictions, truths)
    dists = _demo_distances(predictions, truths, config.gamma,
                            config.squared_translation)
    per_demo = [sum(1 for d in demo if d < config.t_g) / len(demo)
                for demo in dists]
    return float(np.mean(per_demo))


def prediction_error(predictions, truths, config: EvalConfig) -> float:
    """Mean over demos of the mean pose distance."""
    _check_shapes(predictions, truths)
    dists = _demo_distances(predictions, truths, config.gamma,
                            config.squared_translation)
    return float(np.mean([np.mean(demo) for demo in dists]))


def evaluate_demos(predictions, truths, config: EvalConfig) -> EvalReport:
    """Full report: R_s, E_r and the per-demo success/distance breakdown."""
    _check_shapes(predictions, truths)
    dists = _demo_distances(predictions, truths, config.gamma,
                            config.squared_translation)
    per_demo = [{
        "n_success": sum(1 for d in demo if d < config.t_g),
        "L": len(demo),
        "distances": [float(d) for d in demo],
    } for demo in dists]
    r_s = float(np.mean([d["n_success"] / d["L"] for d in per_demo]))
    e_r = float(np.mean([np.mean(demo) for demo in dists]))
    return EvalReport(r_s=r_s, e_r=e_r, per_demo=per_demo)


def node_detection_rate(detected: np.ndarray, truth: np.ndarray,
                        match_radius: float) -> MatchResult:
    """Greedy one-to-one matching by ascending distance.

    Pairs are considered in increasing distance order (ties broken by
    detected then truth index); each side is used at most once and only
    pairs within match_radius count. Rate is matched truths over all
    truths. Empty inputs give rate 0.0 with the degenerate flag set.
    """
    detected = np.asarray(detected, dtype=float).reshape(-1, 3)
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    if detected.shape[0] == 0 or truth.shape[0] == 0:
        return MatchResult(rate=0.0, matches=[], degenerate=True)
    d = np.linalg.norm(detected[:, None, :] - truth[None, :, :], axis=2)
    flat = np.argsort(d, axis=None, kind="stable")
    used_d = np.zeros(detected.shape[0], dtype=bool)
    used_t = np.zeros(truth.shape[0], dtype=bool)
    matches = []
    for f in flat:
        i, j = divmod(int(f), truth.shape[0])
        if d[i, j] > match_radius:
            break
        if used_d[i] or used_t[j]:
            continue
        used_d[i] = True
        used_t[j] = True
        matches.append((i, j))
    return MatchResult(rate=len(matches) / truth.shape[0], matches=matches)


def sweep_thresholds(predictions, truths, gamma, thresholds,
                     squared_translation: bool = False):
    """Success rate at each threshold; returns [(t_g, rate)] sorted by t_g.

    The success curve is non-decreasing in t_g by construction.
    """
    _check_shapes(predictions, truths)
    dists = _demo_distances(predictions, truths, gamma, squared_translation)
    out = []
    for t_g in sorted(float(t) for t in thresholds):
        per_demo = [sum(1 for d in demo if d < t_g) / len(demo) for demo in dists]
        out.append((t_g, float(np.mean(per_demo))))
    return out
