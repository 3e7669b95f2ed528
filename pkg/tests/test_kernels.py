"""Backend parity: every kernel feature agrees between compiled and Python."""

import numpy as np
import pytest

from sgdinfer import _kernels
from sgdinfer.engine import run_blocks, run_interleaved, run_main
from sgdinfer.errors import NonFiniteGradientError
from sgdinfer.models import (
    LogisticRegressionModel,
    QuadraticModel,
    gaussian_noise_linreg,
)
from sgdinfer.noise import ParetoSpec, SymmetricParetoNoise
from sgdinfer.oracle_aware import InjectedNoiseOracle
from sgdinfer.rng import RngStream
from sgdinfer.sgd import DEFAULT_SCHEDULE

pytestmark = pytest.mark.skipif(
    len(_kernels.available_backends()) < 2, reason="compiled backend not built")


def _oracles():
    return {
        "linreg": gaussian_noise_linreg(np.array([0.5, -0.5, 1.0]), np.eye(3)),
        "logreg": LogisticRegressionModel.homogeneous(np.array([0.5, -0.25]), 1.5),
        "quadratic": QuadraticModel(
            np.diag([1.0, 2.0]), SymmetricParetoNoise.homogeneous(1.5, 1.0, 2)),
        "injected": InjectedNoiseOracle(
            QuadraticModel(np.diag([1.0, 2.0]),
                           SymmetricParetoNoise.homogeneous(2.5, 1.0, 2)),
            ParetoSpec(1.5, 1.0)),
    }


def _run_both(fn):
    current = _kernels.backend_name()
    out = {}
    try:
        for name in _kernels.available_backends():
            _kernels.set_backend(name)
            out[name] = fn()
    finally:
        _kernels.set_backend(current)
    return out["cython"], out["python"]


@pytest.mark.parametrize("name", ["linreg", "logreg", "quadratic", "injected"])
def test_run_main_parity_all_features(name):
    oracle = _oracles()[name]

    def job():
        raw = run_main(oracle, 2500, DEFAULT_SCHEDULE,
                       RngStream(11, 0).generator(), None, full_sigma=True,
                       collect_hessian=True, random_scaling=True,
                       sigma_checkpoints=(1000, 2500))
        return raw

    a, b = _run_both(job)
    np.testing.assert_allclose(a.theta, b.theta, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(a.theta_sum, b.theta_sum, rtol=1e-11, atol=1e-13)
    assert a.gsq_sum == pytest.approx(b.gsq_sum, rel=1e-11)
    np.testing.assert_allclose(a.sigma_sum, b.sigma_sum, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(a.hess_sum, b.hess_sum, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(a.rs_sv, b.rs_sv, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(a.rs_sm, b.rs_sm, rtol=1e-11, atol=1e-13)
    assert a.rs_s2 == pytest.approx(b.rs_s2, rel=1e-12)
    for (ka, sa), (kb, sb) in zip(a.sigma_snapshots, b.sigma_snapshots):
        assert ka == kb
        np.testing.assert_allclose(sa, sb, rtol=1e-11, atol=1e-13)


def test_run_blocks_parity():
    oracle = _oracles()["linreg"]

    def job():
        return run_blocks(oracle, 300, 7, DEFAULT_SCHEDULE,
                          RngStream(12, 0).generator(), None)

    (tb_a, tr_a), (tb_b, tr_b) = _run_both(job)
    np.testing.assert_allclose(tb_a, tb_b, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(tr_a, tr_b, rtol=1e-11)


def test_run_interleaved_parity_and_block_reset():
    oracle = _oracles()["quadratic"]

    def job():
        return run_interleaved(oracle, 2000, 300, DEFAULT_SCHEDULE,
                               RngStream(13, 0).generator(), None)

    (raw_a, tb_a, tr_a), (raw_b, tb_b, tr_b) = _run_both(job)
    assert tb_a.shape == (6, 2)
    np.testing.assert_allclose(raw_a.theta, raw_b.theta, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(tb_a, tb_b, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(tr_a, tr_b, rtol=1e-11)


def test_shared_blocks_use_main_data():
    """With shared randomness the first block equals a main run truncated at t_n."""
    oracle = _oracles()["quadratic"]
    raw_full, tb, tr = run_interleaved(oracle, 900, 300, DEFAULT_SCHEDULE,
                                       RngStream(14, 0).generator(), None)
    short = run_main(oracle, 300, DEFAULT_SCHEDULE, RngStream(14, 0).generator(), None)
    np.testing.assert_allclose(tb[0], short.theta_sum / 301, rtol=1e-12)
    assert tr[0] == pytest.approx(short.gsq_sum / 300, rel=1e-12)


def test_non_finite_gradient_reported_with_global_index():
    oracle = gaussian_noise_linreg(np.array([1.0]), np.eye(1))

    class PoisonedOracle:
        kind = oracle.kind
        dim = oracle.dim
        theta_star = oracle.theta_star

        def kernel_batch(self, gen, m):
            batch = oracle.kernel_batch(gen, m)
            return batch

    poisoned = PoisonedOracle()
    # inject a NaN into the data stream at a known global step
    original = poisoned.kernel_batch
    state = {"seen": 0}

    def tampered(gen, m):
        batch = original(gen, m)
        lo, hi = state["seen"], state["seen"] + m
        if lo <= 41 < hi:
            batch["ys"] = batch["ys"].copy()
            batch["ys"][41 - lo] = np.nan
        state["seen"] = hi
        return batch

    poisoned.kernel_batch = tampered
    with pytest.raises(NonFiniteGradientError) as err:
        run_main(poisoned, 100, DEFAULT_SCHEDULE, RngStream(15, 0).generator(), None)
    assert err.value.iteration == 42


def test_backend_selection_roundtrip():
    current = _kernels.backend_name()
    _kernels.set_backend("python")
    assert _kernels.backend_name() == "python"
    _kernels.set_backend(current)
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")
