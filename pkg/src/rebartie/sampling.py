"""Annealed Langevin sampling of tying poses on SE(3).

The sampler walks a pose with body-frame updates
g <- g * exp(0.5 * s * dt + dW), where s is a score-field twist and dW
a Wiener increment whose scale is annealed down as the level t falls
from t_start to t_end. A score field is any callable
(g, t, scene, tool) -> twist; the analytic Gaussian score below stands
in for a learned conditional model and ignores the cloud arguments.
Exposing an `energy(g, t, scene, tool)` attribute is optional; when
present it picks the best chain, otherwise the first chain wins.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCrop, NonFiniteScore
from .geometry import (Pose, compose, exp_se3, inverse, log_se3,
                       quat_from_matrix, sample_wiener)

__all__ = [
    "AnnealSchedule",
    "SamplerConfig",
    "AnalyticGaussianScore",
    "analytic_gaussian_score",
    "diffuse_forward",
    "langevin_step",
    "anneal_sample",
    "predict_tying_pose",
]


@dataclass
class AnnealSchedule:
    """Linear level schedule t_start -> t_end over a fixed step count.

    sigma_rot / sigma_trans are per-unit-time noise scales at level
    t_start; the per-step scale is multiplied by a decay factor, either
    proportional to the level ("linear") or geometric in the step index
    ("geometric"), both reaching t_end/t_start at the final step.
    """

    steps: int = 200
    t_start: float = 1.0
    t_end: float = 0.01
    dt: float = 0.05
    sigma_rot: float = 0.4
    sigma_trans: float = 0.4
    noise_decay: str = "linear"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not (0.0 < self.t_end <= self.t_start):
            raise ValueError("need 0 < t_end <= t_start")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.sigma_rot < 0.0 or self.sigma_trans < 0.0:
            raise ValueError("noise scales must be >= 0")
        if self.noise_decay not in ("linear", "geometric"):
            raise ValueError(f"unknown noise_decay {self.noise_decay!r}")

    def level(self, i: int) -> float:
        if self.steps == 1:
            return self.t_start
        return self.t_start + (self.t_end - self.t_start) * i / (self.steps - 1)

    def noise_factor(self, i: int) -> float:
        if self.noise_decay == "linear":
            return self.level(i) / self.t_start
        if self.steps == 1:
            return 1.0
        return (self.t_end / self.t_start) ** (i / (self.steps - 1))


@dataclass
class SamplerConfig:
    schedule: AnnealSchedule = field(default_factory=AnnealSchedule)
    n_chains: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")


class AnalyticGaussianScore:
    """Score of an isotropic Gaussian on SE(3) centered at a target pose.

    score(g) = log(g^-1 * target) with the rotational part divided by
    sigma_rot^2 and the translational part by sigma_trans^2. The level
    and cloud arguments are accepted and ignored.
    """

    def __init__(self, target: Pose, sigma_rot: float = 0.25,
                 sigma_trans: float = 0.25):
        if sigma_rot <= 0.0 or sigma_trans <= 0.0:
            raise ValueError("score sigmas must be > 0")
        self.target = target
        self.sigma_rot = sigma_rot
        self.sigma_trans = sigma_trans

    def __call__(self, g: Pose, t: float, scene=None, tool=None) -> np.ndarray:
        xi = log_se3(compose(inverse(g), self.target))
        out = np.empty(6)
        out[:3] = xi[:3] / (self.sigma_rot ** 2)
        out[3:] = xi[3:] / (self.sigma_trans ** 2)
        return out

    def energy(self, g: Pose, t: float, scene=None, tool=None) -> float:
        xi = log_se3(compose(inverse(g), self.target))
        return 0.5 * (float(xi[:3] @ xi[:3]) / self.sigma_rot ** 2
                      + float(xi[3:] @ xi[3:]) / self.sigma_trans ** 2)


def analytic_gaussian_score(target: Pose, sigma_rot: float = 0.25,
                            sigma_trans: float = 0.25) -> AnalyticGaussianScore:
    return AnalyticGaussianScore(target, sigma_rot, sigma_trans)


def diffuse_forward(g0: Pose, t: float, sigma_rot: float, sigma_trans: float,
                    n_substeps: int = 16,
                    rng: np.random.Generator = None) -> Pose:
    """Forward diffusion: compose n_substeps Wiener increments over [0, t]."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    if t == 0.0:
        return g0
    if rng is None:
        rng = np.random.default_rng()
    dt = t / n_substeps
    g = g0
    for _ in range(n_substeps):
        g = compose(g, exp_se3(sample_wiener(dt, sigma_rot, sigma_trans, rng)))
    return g


def langevin_step(g: Pose, score, t: float, dt: float, sigma_rot: float,
                  sigma_trans: float, rng: np.random.Generator,
                  scene=None, tool=None) -> Pose:
    """One body-frame update g * exp(0.5 * score * dt + dW)."""
    s = np.asarray(score(g, t, scene, tool), dtype=float).reshape(6)
    if not np.all(np.isfinite(s)):
        raise NonFiniteScore(f"score field returned {s}")
    xi = 0.5 * s * dt + sample_wiener(dt, sigma_rot, sigma_trans, rng)
    return compose(g, exp_se3(xi))


def anneal_sample(init: Pose, score, config: SamplerConfig,
                  scene=None, tool=None):
    """Run n_chains annealed Langevin chains and reduce to one pose.

    Chain c draws from a generator seeded with seed XOR c, so chains
    are independent of execution order. Returns (best_final,
    trajectory) where trajectory lists the winning chain's pose after
    every step (init first). The best chain minimizes the score field's
    energy at the final level when the field provides one; otherwise
    chain 0 is returned.
    """
    sched = config.schedule
    finals = []
    trajs = []
    for c in range(config.n_chains):
        rng = np.random.default_rng(config.seed ^ c)
        g = init
        traj = [g]
        for i in range(sched.steps):
            t = sched.level(i)
            f = sched.noise_factor(i)
            g = langevin_step(g, score, t, sched.dt, sched.sigma_rot * f,
                              sched.sigma_trans * f, rng, scene, tool)
            traj.append(g)
        finals.append(g)
        trajs.append(traj)
    if hasattr(score, "energy"):
        energies = [score.energy(g, sched.t_end, scene, tool) for g in finals]
        best = int(np.argmin(energies))
    else:
        best = 0
    return finals[best], trajs[best]


def predict_tying_pose(node_crop, frame, standoff: float) -> Pose:
    """Deterministic tying pose for one node.

    Translation: crop centroid pushed standoff meters back along the
    frame's -y (approach) axis. Rotation: tool forward (+y) onto the
    frame y-axis and tool up (+z) onto the frame z-axis.
    """
    pts = node_crop.points if hasattr(node_crop, "points") else np.asarray(node_crop)
    if pts.shape[0] == 0:
        raise EmptyCrop("node crop holds no points")
    centroid = pts.mean(axis=0)
    t = centroid - standoff * frame.y_axis
    q = quat_from_matrix(frame.rotation())
    return Pose(q, t)
