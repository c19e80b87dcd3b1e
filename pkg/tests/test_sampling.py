"""Annealed Langevin sampler: schedules, score fields, convergence."""
import math

import numpy as np
import pytest

from rebartie.errors import EmptyCrop, NonFiniteScore
from rebartie.geometry import (Pose, compose, exp_se3, pose_distance,
                               quat_from_axis_angle, quat_rotate)
from rebartie.ordering import Frame
from rebartie.sampling import (
    AnalyticGaussianScore,
    AnnealSchedule,
    SamplerConfig,
    anneal_sample,
    analytic_gaussian_score,
    diffuse_forward,
    langevin_step,
    predict_tying_pose,
)
from rebartie.scenes import PointCloud


def zero_score(g, t, scene=None, tool=None):
    return np.zeros(6)


# ---------------------------------------------------------------- schedule

def test_schedule_validation():
    with pytest.raises(ValueError):
        AnnealSchedule(steps=0)
    with pytest.raises(ValueError):
        AnnealSchedule(t_start=1.0, t_end=2.0)
    with pytest.raises(ValueError):
        AnnealSchedule(t_end=0.0)
    with pytest.raises(ValueError):
        AnnealSchedule(dt=0.0)
    with pytest.raises(ValueError):
        AnnealSchedule(sigma_rot=-0.1)
    with pytest.raises(ValueError):
        AnnealSchedule(noise_decay="sqrt")


def test_schedule_levels_linear():
    s = AnnealSchedule(steps=5, t_start=1.0, t_end=0.2)
    levels = [s.level(i) for i in range(5)]
    np.testing.assert_allclose(levels, [1.0, 0.8, 0.6, 0.4, 0.2], atol=1e-12)


def test_schedule_single_step():
    s = AnnealSchedule(steps=1, t_start=0.7, t_end=0.7)
    assert s.level(0) == 0.7
    assert s.noise_factor(0) == 1.0
    g = AnnealSchedule(steps=1, t_start=0.7, t_end=0.7, noise_decay="geometric")
    assert g.noise_factor(0) == 1.0


def test_schedule_noise_decay_endpoints():
    for decay in ("linear", "geometric"):
        s = AnnealSchedule(steps=10, t_start=2.0, t_end=0.02,
                           noise_decay=decay)
        assert s.noise_factor(0) == pytest.approx(1.0)
        assert s.noise_factor(9) == pytest.approx(0.01)
    geo = AnnealSchedule(steps=10, t_start=2.0, t_end=0.02,
                         noise_decay="geometric")
    ratios = [geo.noise_factor(i + 1) / geo.noise_factor(i) for i in range(9)]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_chains=0)


# -------------------------------------------------------------- score field

def test_analytic_score_zero_at_target():
    target = Pose(quat_from_axis_angle(np.array([1.0, 0, 0]), 0.4),
                  np.array([0.2, 0.0, -0.1]))
    score = AnalyticGaussianScore(target)
    np.testing.assert_allclose(score(target, 0.5), np.zeros(6), atol=1e-12)
    assert score.energy(target, 0.5) == pytest.approx(0.0, abs=1e-15)


def test_analytic_score_hand_value():
    # identity -> pure translation target: twist is (0, v), scaled 1/sigma^2
    target = Pose(t=np.array([0.3, 0.0, 0.0]))
    score = AnalyticGaussianScore(target, sigma_rot=0.5, sigma_trans=2.0)
    s = score(Pose.identity(), 1.0)
    np.testing.assert_allclose(s, [0, 0, 0, 0.3 / 4.0, 0, 0], atol=1e-12)
    # energy = 0.5 * |v|^2 / sigma_trans^2
    assert score.energy(Pose.identity(), 1.0) == pytest.approx(
        0.5 * 0.09 / 4.0, abs=1e-12)


def test_analytic_score_rotation_scaling():
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.2)
    score = AnalyticGaussianScore(Pose(q, np.zeros(3)), sigma_rot=0.5,
                                  sigma_trans=1.0)
    s = score(Pose.identity(), 1.0)
    np.testing.assert_allclose(s[:3], [0, 0, 0.2 / 0.25], atol=1e-12)


def test_analytic_score_rejects_bad_sigmas():
    with pytest.raises(ValueError):
        AnalyticGaussianScore(Pose.identity(), sigma_rot=0.0)
    assert isinstance(analytic_gaussian_score(Pose.identity()),
                      AnalyticGaussianScore)


# ------------------------------------------------------------------- steps

def test_diffuse_forward_zero_time(rng):
    g0 = Pose(t=np.array([1.0, 2.0, 3.0]))
    assert diffuse_forward(g0, 0.0, 0.5, 0.5, rng=rng) is g0


def test_diffuse_forward_validation(rng):
    with pytest.raises(ValueError):
        diffuse_forward(Pose.identity(), -1.0, 0.5, 0.5, rng=rng)
    with pytest.raises(ValueError):
        diffuse_forward(Pose.identity(), 1.0, 0.5, 0.5, n_substeps=0, rng=rng)


def test_diffuse_forward_zero_noise_exact():
    g0 = Pose(quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.3),
              np.array([0.1, 0.2, 0.3]))
    out = diffuse_forward(g0, 1.0, 0.0, 0.0, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(out.q, g0.q)
    np.testing.assert_array_equal(out.t, g0.t)


def test_diffuse_forward_spread():
    g0 = Pose.identity()
    t, sigma = 0.5, 0.3
    finals = np.array([
        diffuse_forward(g0, t, 0.0, sigma, rng=np.random.default_rng(i)).t
        for i in range(2000)])
    # per-component variance of pure-translation diffusion is sigma^2 * t
    np.testing.assert_allclose(finals.var(axis=0), sigma ** 2 * t, rtol=0.15)


def test_langevin_step_identity_when_quiet():
    # zero score and zero noise must reproduce the pose exactly
    g = Pose(quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), 0.7),
             np.array([0.4, -0.2, 0.9]))
    out = langevin_step(g, zero_score, 1.0, 0.05, 0.0, 0.0,
                        np.random.default_rng(0))
    np.testing.assert_array_equal(out.q, g.q)
    np.testing.assert_array_equal(out.t, g.t)


def test_langevin_step_nonfinite_score_raises():
    def bad(g, t, scene=None, tool=None):
        return np.full(6, np.nan)
    with pytest.raises(NonFiniteScore):
        langevin_step(Pose.identity(), bad, 1.0, 0.05, 0.1, 0.1,
                      np.random.default_rng(0))


def test_langevin_step_descends_toward_target():
    target = Pose(t=np.array([1.0, 0.0, 0.0]))
    score = AnalyticGaussianScore(target, sigma_trans=1.0, sigma_rot=1.0)
    g = Pose.identity()
    d0 = pose_distance(g, target)
    for _ in range(50):
        g = langevin_step(g, score, 1.0, 0.1, 0.0, 0.0,
                          np.random.default_rng(0))
    assert pose_distance(g, target) < d0 / 10


# ----------------------------------------------------------------- anneal

def test_anneal_sample_trajectory_shape():
    cfg = SamplerConfig(schedule=AnnealSchedule(steps=20), n_chains=2, seed=1)
    best, traj = anneal_sample(Pose.identity(), zero_score, cfg)
    assert len(traj) == 21
    assert traj[0] is not None
    np.testing.assert_array_equal(traj[0].q, Pose.identity().q)


def test_anneal_sample_quiet_chain_stays_put():
    sched = AnnealSchedule(steps=15, sigma_rot=0.0, sigma_trans=0.0)
    cfg = SamplerConfig(schedule=sched, n_chains=3, seed=0)
    init = Pose(t=np.array([0.5, 0.5, 0.5]))
    best, traj = anneal_sample(init, zero_score, cfg)
    np.testing.assert_array_equal(best.q, init.q)
    np.testing.assert_array_equal(best.t, init.t)
    for g in traj:
        np.testing.assert_array_equal(g.t, init.t)


def test_anneal_sample_deterministic():
    target = Pose(t=np.array([0.2, -0.1, 0.3]))
    score = AnalyticGaussianScore(target)
    cfg = SamplerConfig(n_chains=2, seed=9)
    a, _ = anneal_sample(Pose.identity(), score, cfg)
    b, _ = anneal_sample(Pose.identity(), score, cfg)
    np.testing.assert_array_equal(a.q, b.q)
    np.testing.assert_array_equal(a.t, b.t)


def test_anneal_sample_converges_to_target():
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.5)
    target = Pose(q, np.array([0.15, -0.1, 0.2]))
    score = AnalyticGaussianScore(target)
    cfg = SamplerConfig(n_chains=4, seed=0)
    init = diffuse_forward(target, 1.0, 0.4, 0.4,
                           rng=np.random.default_rng(42))
    best, _ = anneal_sample(init, score, cfg)
    assert pose_distance(best, target, gamma=1.0) < 0.1


def test_anneal_sample_seed_changes_noise():
    score = AnalyticGaussianScore(Pose(t=np.array([0.2, 0.0, 0.0])))
    a, _ = anneal_sample(Pose.identity(), score,
                         SamplerConfig(n_chains=1, seed=0))
    b, _ = anneal_sample(Pose.identity(), score,
                         SamplerConfig(n_chains=1, seed=123456))
    assert not np.array_equal(a.t, b.t)


# -------------------------------------------------------------- prediction

def test_predict_tying_pose_identity_frame(rng):
    frame = Frame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0.0, 1, 0]),
                  np.array([0.0, 0, 1]))
    pts = rng.normal(0.0, 0.01, (100, 3)) + [0.5, 0.2, 0.1]
    g = predict_tying_pose(PointCloud(pts), frame, standoff=0.3)
    np.testing.assert_allclose(g.t, pts.mean(axis=0) - [0.0, 0.3, 0.0],
                               atol=1e-12)
    np.testing.assert_allclose(g.q, [1, 0, 0, 0], atol=1e-12)


def test_predict_tying_pose_rotated_frame(rng):
    # frame y (approach) along world +z: tool backs off downward
    frame = Frame(np.zeros(3), np.array([0.0, 1, 0]), np.array([0.0, 0, 1]),
                  np.array([1.0, 0, 0]))
    pts = np.tile(np.array([0.1, 0.2, 0.3]), (5, 1))
    g = predict_tying_pose(PointCloud(pts), frame, standoff=0.25)
    np.testing.assert_allclose(g.t, [0.1, 0.2, 0.05], atol=1e-12)
    np.testing.assert_allclose(quat_rotate(g.q, np.array([0.0, 1.0, 0.0])),
                               frame.y_axis, atol=1e-12)


def test_predict_tying_pose_empty_crop():
    frame = Frame(np.zeros(3), np.array([1.0, 0, 0]), np.array([0.0, 1, 0]),
                  np.array([0.0, 0, 1]))
    with pytest.raises(EmptyCrop):
        predict_tying_pose(PointCloud(np.empty((0, 3))), frame, 0.3)
