"""Injected-noise region machinery: Hessian averaging, simulated quantiles,
region scaling, and the final-iterate vs averaged tail-scale comparison."""

import math

import numpy as np
import pytest

from sgdinfer.errors import IllConditionedHessianError, InvalidScheduleError
from sgdinfer.inference import CoordinateProjection, LinfNorm
from sgdinfer.models import (
    LinearRegressionModel,
    QuadraticModel,
    gaussian_noise_linreg,
)
from sgdinfer.noise import GaussianNoise, ParetoSpec, ZeroNoise, stable_limit_scale
from sgdinfer.oracle_aware import (
    HessianEstimate,
    InjectedNoiseOracle,
    OracleQuantile,
    estimate_hessian,
    oracle_coordinate_quantiles,
    oracle_quantile,
    oracle_region,
    scale_comparison,
)
from sgdinfer.rng import RngStream
from sgdinfer.sgd import TrajectoryConfig


# ---------------------------------------------------------------------------
# Hessian estimation


def test_hessian_exact_for_quadratic():
    h = np.array([[2.0, -1.0], [-1.0, 1.0]])
    model = QuadraticModel(h, GaussianNoise.from_matrix(np.eye(2)))
    est = estimate_hessian(model, TrajectoryConfig(n=50), RngStream(1, 0))
    np.testing.assert_allclose(est.matrix, h, rtol=1e-12)
    assert est.n == 50


def test_hessian_concentrates_for_linreg_identity():
    model = gaussian_noise_linreg(np.array([1.0, -1.0, 0.5]), np.eye(3))
    est = estimate_hessian(model, TrajectoryConfig(n=100_000), RngStream(2, 0))
    assert np.max(np.abs(est.matrix - np.eye(3))) <= 0.05


def test_hessian_symmetric():
    model = gaussian_noise_linreg(np.zeros(4), np.eye(4))
    est = estimate_hessian(model, TrajectoryConfig(n=2000), RngStream(3, 0))
    np.testing.assert_allclose(est.matrix, est.matrix.T, atol=1e-14)


def test_injected_oracle_gradient_and_hessian():
    base = QuadraticModel(np.eye(2), ZeroNoise(2))
    inj = InjectedNoiseOracle(base, ParetoSpec(1.5, 1.0))
    gen = RngStream(4, 0).generator()
    xi = inj.draw(gen)
    theta = np.array([1.0, -1.0])
    np.testing.assert_allclose(inj.gradient(theta, xi), theta + xi[1])
    np.testing.assert_allclose(inj.hessian(theta, xi), np.eye(2))
    # kernel batch carries the injected term additively
    batch = inj.kernel_batch(gen, 8)
    assert batch["extra"].shape == (8, 2)


# ---------------------------------------------------------------------------
# simulated quantiles


def test_oracle_quantile_identity_matches_marginal():
    alpha, sigma, delta, mc = 1.5, 1.0, 0.1, 50_000
    q = oracle_quantile(np.eye(2), alpha, sigma, CoordinateProjection(0),
                        delta, mc, RngStream(5, 0))
    # same draws, straight marginal quantile
    from sgdinfer.noise import sample_isotropic_stable
    gen = RngStream(5, 0).generator()
    draws = sample_isotropic_stable(alpha, sigma, 2, gen, mc)
    vals = np.sort(np.abs(draws[:, 0]))
    rank = math.ceil((1 - delta) * mc - 1e-9)
    assert q.q_dagger == vals[rank - 1]


def test_oracle_quantile_halves_for_doubled_curvature():
    alpha, sigma, delta, mc = 1.5, 1.0, 0.05, 50_000
    q1 = oracle_quantile(np.eye(2), alpha, sigma, LinfNorm(), delta, mc, RngStream(6, 0))
    q2 = oracle_quantile(2 * np.eye(2), alpha, sigma, LinfNorm(), delta, mc, RngStream(6, 0))
    assert q2.q_dagger == pytest.approx(q1.q_dagger / 2, rel=1e-12)


def test_oracle_quantile_stable_across_seeds():
    alpha, sigma, delta, mc = 1.5, 1.0, 0.05, 1_000_000
    qa = oracle_quantile(np.eye(1), alpha, sigma, CoordinateProjection(0),
                         delta, mc, RngStream(7, 0))
    qb = oracle_quantile(np.eye(1), alpha, sigma, CoordinateProjection(0),
                         delta, mc, RngStream(8, 0))
    assert qa.q_dagger == pytest.approx(qb.q_dagger, rel=0.01)
    assert qa.mc_error < 0.02 * qa.q_dagger


def test_oracle_quantile_scaling_in_sigma():
    # sigma -> lam**alpha * sigma scales the draws, hence the quantile, by lam
    alpha, delta, mc, lam = 1.4, 0.05, 40_000, 2.5
    base = oracle_quantile(np.eye(2), alpha, 1.0, LinfNorm(), delta, mc, RngStream(9, 0))
    scaled = oracle_quantile(np.eye(2), alpha, lam**alpha, LinfNorm(), delta, mc,
                             RngStream(9, 0))
    assert scaled.q_dagger == pytest.approx(lam * base.q_dagger, rel=1e-12)


def test_oracle_coordinate_quantiles_match_loop():
    qs = oracle_coordinate_quantiles(np.diag([1.0, 2.0]), 1.5, 1.3, 0.05,
                                     20_000, RngStream(10, 0))
    for j in range(2):
        q = oracle_quantile(np.diag([1.0, 2.0]), 1.5, 1.3,
                            CoordinateProjection(j), 0.05, 20_000, RngStream(10, 0))
        assert qs[j] == pytest.approx(q.q_dagger)


def test_oracle_quantile_rejects_singular_hessian():
    with pytest.raises(IllConditionedHessianError):
        oracle_quantile(np.array([[1.0, 1.0], [1.0, 1.0]]), 1.5, 1.0,
                        LinfNorm(), 0.05, 1000, RngStream(11, 0))


def test_stable_limit_scale_used_for_injection():
    # the injected-noise scale feeds the quantile simulation; spot check value
    assert stable_limit_scale(ParetoSpec(1.5, 1.0)) == pytest.approx(2.5066, abs=1e-3)


# ---------------------------------------------------------------------------
# region


def test_oracle_region_contains_center():
    q = OracleQuantile(1.7, 0.05, 1000)
    region = oracle_region(np.array([0.2, -0.3]), 1000, 1.5, q, LinfNorm())
    assert region.contains(np.array([0.2, -0.3]))


def test_oracle_region_width_scaling():
    q = OracleQuantile(2.0, 0.05, 1000)
    alpha = 1.5
    r1 = oracle_region(np.zeros(1), 10**4, alpha, q, CoordinateProjection(0))
    r2 = oracle_region(np.zeros(1), 2 * 10**4, alpha, q, CoordinateProjection(0))
    # width shrinks like n**(1/alpha - 1) = n**(-1/3)
    assert r2.half_width / r1.half_width == pytest.approx(2 ** (-1 / 3), rel=1e-12)
    with pytest.raises(ValueError):
        oracle_region(np.zeros(1), 100, 2.0, q, CoordinateProjection(0))


# ---------------------------------------------------------------------------
# tail-scale comparison


def test_scale_comparison_equality_case():
    # c * h = 1 gives equality; d=1 closed form 1/(alpha * h_shift)
    final, polyak = scale_comparison(np.array([1.0]), np.array([1.0]), 1.5, 1.0,
                                     np.array([1.0]))
    assert final == pytest.approx(1.0, abs=1e-10)
    assert polyak == pytest.approx(1.0, abs=1e-15)


def test_scale_comparison_hand_value():
    # d=1, h=1, sigma=1, alpha=1.5, c=2: final = 2**0.5 / (1.5 * 5/6)
    final, polyak = scale_comparison(np.array([1.0]), np.array([1.0]), 1.5, 2.0,
                                     np.array([1.0]))
    assert final == pytest.approx(math.sqrt(2.0) / (1.5 * (5.0 / 6.0)), rel=1e-10)
    assert polyak == pytest.approx(1.0)
    assert final >= polyak


def test_scale_comparison_quadrature_matches_closed_form_1d():
    # one dimension: integral of (sigma * exp(-2 h~ t))**(alpha/2) is
    # sigma**(alpha/2) / (alpha * h~)
    for h, sig, alpha, c in [(0.7, 2.0, 1.3, 3.0), (2.5, 0.4, 1.9, 1.0)]:
        final, _ = scale_comparison(np.array([h]), np.array([sig]), alpha, c,
                                    np.array([1.0]))
        h_shift = h - (1 - 1 / alpha) / c
        closed = c ** (alpha - 1) * sig ** (alpha / 2) / (alpha * h_shift)
        assert final == pytest.approx(closed, abs=1e-10, rel=1e-10)


def test_scale_comparison_dominance_random_instances():
    gen = RngStream(12, 0).generator()
    for _ in range(100):
        d = int(gen.integers(1, 5))
        h = gen.uniform(0.2, 3.0, d)
        sig = gen.uniform(0.2, 3.0, d)
        alpha = gen.uniform(1.05, 1.95)
        threshold = (1 - 1 / alpha) / h.min()
        c = threshold * gen.uniform(1.05, 4.0)
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        final, polyak = scale_comparison(h, sig, alpha, c, u)
        assert final >= polyak - 1e-8


def test_scale_comparison_threshold_error():
    with pytest.raises(InvalidScheduleError):
        scale_comparison(np.array([1.0]), np.array([1.0]), 1.5, (1 - 1 / 1.5), np.array([1.0]))


def test_hessian_estimate_condition_number():
    est = HessianEstimate(np.diag([1.0, 4.0]), 10)
    assert est.condition_number == pytest.approx(4.0)
