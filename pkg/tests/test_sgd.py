"""Recursion tests: hand-checked updates, streaming equivalence, engine parity."""

import numpy as np
import pytest

from sgdinfer import _kernels
from sgdinfer.errors import NonFiniteGradientError
from sgdinfer.models import QuadraticModel, gaussian_noise_linreg
from sgdinfer.noise import ZeroNoise
from sgdinfer.rng import RngStream
from sgdinfer.sgd import (
    DEFAULT_SCHEDULE,
    RunningStats,
    StepSchedule,
    TrajectoryConfig,
    run_trajectory,
    sgd_step,
)


def test_default_schedule_values():
    assert DEFAULT_SCHEDULE.c == 0.5
    assert DEFAULT_SCHEDULE.rho == 0.6
    assert DEFAULT_SCHEDULE.eta(1) == 0.5
    assert DEFAULT_SCHEDULE.eta(4) == pytest.approx(0.5 * 4 ** -0.6)


def test_schedule_validation():
    with pytest.raises(ValueError):
        StepSchedule(0.0, 0.6)
    with pytest.raises(ValueError):
        StepSchedule(1.0, 0.0)
    with pytest.raises(ValueError):
        StepSchedule(1.0, 1.2)
    StepSchedule(1.0, 1.0)  # rho = 1 allowed for the plain recursion


def test_zero_gradient_is_fixed_point():
    stats = RunningStats(np.array([2.0, -1.0]), keep_full_sigma=True)
    for _ in range(5):
        sgd_step(stats, np.zeros(2), DEFAULT_SCHEDULE)
    np.testing.assert_array_equal(stats.theta, [2.0, -1.0])
    np.testing.assert_array_equal(stats.theta_bar, [2.0, -1.0])
    assert stats.trace_sigma == 0.0
    np.testing.assert_array_equal(stats.sigma, np.zeros((2, 2)))


def test_hand_recursion_two_steps():
    # c=1, rho=1, theta0=0, gradients 1, 1: theta_1 = -1, theta_2 = -1.5,
    # running average folds theta0: (0 - 1 - 1.5) / 3
    sched = StepSchedule(1.0, 1.0)
    stats = RunningStats(np.zeros(1))
    sgd_step(stats, np.array([1.0]), sched)
    assert stats.theta[0] == pytest.approx(-1.0)
    sgd_step(stats, np.array([1.0]), sched)
    assert stats.theta[0] == pytest.approx(-1.5)
    assert stats.theta_bar[0] == pytest.approx((0.0 - 1.0 - 1.5) / 3)


def test_hand_second_moment():
    stats = RunningStats(np.zeros(1))
    sgd_step(stats, np.array([3.0]), DEFAULT_SCHEDULE)
    sgd_step(stats, np.array([4.0]), DEFAULT_SCHEDULE)
    assert stats.trace_sigma == pytest.approx((9 + 16) / 2)


def test_non_finite_gradient_raises_with_index():
    stats = RunningStats(np.zeros(2))
    sgd_step(stats, np.ones(2), DEFAULT_SCHEDULE)
    with pytest.raises(NonFiniteGradientError) as err:
        sgd_step(stats, np.array([1.0, np.nan]), DEFAULT_SCHEDULE)
    assert err.value.iteration == 2


def test_scale_equivariance_of_iterate_path():
    gen = RngStream(1, 0).generator()
    grads = gen.standard_normal((50, 3))
    a = RunningStats(np.zeros(3))
    b = RunningStats(np.zeros(3))
    for g in grads:
        sgd_step(a, g, StepSchedule(1.0, 0.6))
        sgd_step(b, 2.0 * g, StepSchedule(0.5, 0.6))
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-12)
    np.testing.assert_allclose(a.theta_bar, b.theta_bar, rtol=1e-12)


def test_full_sigma_symmetric_psd():
    gen = RngStream(2, 0).generator()
    stats = RunningStats(np.zeros(3), keep_full_sigma=True)
    for g in gen.standard_normal((200, 3)):
        sgd_step(stats, g, DEFAULT_SCHEDULE)
    sigma = stats.sigma
    np.testing.assert_allclose(sigma, sigma.T)
    assert np.min(np.linalg.eigvalsh(sigma)) >= -1e-12
    assert stats.trace_sigma == pytest.approx(np.trace(sigma), rel=1e-12)


def test_streaming_matches_brute_force():
    gen = RngStream(3, 0).generator()
    n, d = 2_000, 4
    grads = np.asarray(
        np.sign(gen.standard_normal((n, d))) * gen.random((n, d)) ** -0.6)
    theta0 = gen.standard_normal(d)
    stats = RunningStats(theta0, keep_full_sigma=True)
    thetas = [theta0.copy()]
    for g in grads:
        sgd_step(stats, g, DEFAULT_SCHEDULE)
        thetas.append(stats.theta.copy())
    brute_mean = np.mean(thetas, axis=0)
    np.testing.assert_allclose(stats.theta_bar, brute_mean, rtol=1e-12)
    brute_trace = np.mean(np.sum(grads**2, axis=1))
    assert stats.trace_sigma == pytest.approx(brute_trace, rel=1e-12)
    brute_sigma = grads.T @ grads / n
    np.testing.assert_allclose(stats.sigma, brute_sigma, rtol=1e-10, atol=1e-14)


def test_deterministic_contraction_zero_noise():
    model = QuadraticModel(np.eye(3), ZeroNoise(3))
    cfg = TrajectoryConfig(n=200, theta0=np.ones(3), schedule=StepSchedule(0.5, 0.6))
    stats = run_trajectory(model, cfg, RngStream(4, 0))
    # replay: norms strictly decrease toward the origin
    norms = [np.sqrt(3.0)]
    theta = np.ones(3)
    for k in range(1, 201):
        theta = theta - 0.5 * k**-0.6 * theta
        norms.append(np.linalg.norm(theta))
    assert all(b < a for a, b in zip(norms, norms[1:]))
    np.testing.assert_allclose(stats.theta, theta, rtol=1e-12)


def test_run_trajectory_matches_stepwise_replay():
    """Engine trajectories equal the one-step recursion fed the same data."""
    theta_star = np.array([0.5, -1.0, 0.25])
    model = gaussian_noise_linreg(theta_star, np.eye(3))
    n = 1500
    cfg = TrajectoryConfig(n=n, keep_full_sigma=True)
    stats = run_trajectory(model, cfg, RngStream(5, 0))

    gen = RngStream(5, 0).generator()
    replay = RunningStats(np.zeros(3), keep_full_sigma=True)
    from sgdinfer.engine import CHUNK

    remaining = n
    while remaining:
        m = min(CHUNK, remaining)
        batch = model.kernel_batch(gen, m)
        for i in range(m):
            g = (batch["xs"][i] @ replay.theta - batch["ys"][i]) * batch["xs"][i]
            sgd_step(replay, g, cfg.schedule)
        remaining -= m
    np.testing.assert_allclose(stats.theta, replay.theta, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(stats.theta_bar, replay.theta_bar, rtol=1e-10, atol=1e-12)
    assert stats.trace_sigma == pytest.approx(replay.trace_sigma, rel=1e-12)


@pytest.mark.skipif(len(_kernels.available_backends()) < 2,
                    reason="compiled backend not built")
def test_backends_agree():
    theta_star = np.array([1.0, 0.0, -1.0, 0.5])
    model = gaussian_noise_linreg(theta_star, np.eye(4))
    cfg = TrajectoryConfig(n=3000, keep_full_sigma=True)
    results = {}
    current = _kernels.backend_name()
    try:
        for name in _kernels.available_backends():
            _kernels.set_backend(name)
            results[name] = run_trajectory(model, cfg, RngStream(6, 0))
    finally:
        _kernels.set_backend(current)
    a, b = results["cython"], results["python"]
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a.theta_bar, b.theta_bar, rtol=1e-12, atol=1e-14)
    assert a.trace_sigma == pytest.approx(b.trace_sigma, rel=1e-12)
    np.testing.assert_allclose(a.sigma, b.sigma, rtol=1e-12, atol=1e-14)
