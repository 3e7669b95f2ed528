"""Confidence regions for runs with injected heavy-tailed noise.

When i.i.d. symmetric Pareto noise with a *known* tail index ``alpha`` in
(1, 2) is added to every gradient query and dominates the intrinsic noise,
the limit law of the averaged iterate is known up to the Hessian ``H``:
``n**(1 - 1/alpha) * (theta_bar - theta*)`` converges to ``H^{-1} L`` with
``L`` stable of index alpha. The region is then built directly:

* estimate ``H`` by averaging per-sample Hessians along the trajectory,
* simulate the quantile of ``|phi(H_hat^{-1} L)|`` by Monte Carlo,
* accept theta iff ``n**(1 - 1/alpha) * |phi(theta_bar - theta)| <= q``.

The stable scale ``sigma`` matching the injected Pareto law comes from
:func:`sgdinfer.noise.stable_limit_scale`.

This module also hosts the tail-scale comparison between the final-iterate
and averaged limits for commuting diagonal curvature/dispersion pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import engine
from .errors import IllConditionedHessianError, InvalidScheduleError
from .inference import ConfidenceRegion
from .noise import ParetoSpec, sample_isotropic_stable
from .rng import RngStream
from .sgd import TrajectoryConfig


# ---------------------------------------------------------------------------
# injected noise wrapper


class InjectedNoiseOracle:
    """Adds i.i.d. symmetric Pareto noise per coordinate to a base oracle.

    The injection does not change per-sample Hessians. When the base oracle
    has a compiled kernel layout the injected draws ride along as an
    additive per-step term, so trajectories stay fast.
    """

    def __init__(self, base, pareto: ParetoSpec):
        self.base = base
        self.pareto = pareto
        self._alphas = np.full(base.dim, pareto.alpha)
        self._lams = np.full(base.dim, pareto.lam)

    @property
    def kind(self):
        return self.base.kind

    @property
    def dim(self):
        return self.base.dim

    @property
    def theta_star(self):
        return self.base.theta_star

    @property
    def hessian_matrix(self):
        return self.base.hessian_matrix  # quadratic base only

    def _art(self, gen, m):
        u = gen.random((m, self.dim))
        v = np.maximum(2.0 * np.minimum(u, 1.0 - u), np.finfo(float).tiny)
        return np.sign(u - 0.5) * self._lams * (v ** (-1.0 / self._alphas) - 1.0)

    def draw(self, gen):
        base_xi = self.base.draw(gen)
        art = self._art(gen, 1)[0]
        return base_xi, art

    def gradient(self, theta, xi):
        base_xi, art = xi
        return self.base.gradient(theta, base_xi) + art

    def hessian(self, theta, xi):
        return self.base.hessian(theta, xi[0])

    def kernel_batch(self, gen, m):
        batch = dict(self.base.kernel_batch(gen, m))
        art = self._art(gen, m)
        batch["extra"] = art if batch["extra"] is None else batch["extra"] + art
        return batch

    def gradient_sample(self, theta, gen, m):
        base = self.base.gradient_sample(theta, gen, m)
        return base + self._art(gen, m)


# ---------------------------------------------------------------------------
# Hessian estimation


@dataclass
class HessianEstimate:
    """Streaming average of per-sample Hessians along a trajectory."""

    matrix: np.ndarray
    n: int

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.matrix))


def estimate_hessian(oracle, cfg: TrajectoryConfig, rng) -> HessianEstimate:
    """Average per-sample Hessians over a fresh trajectory of length cfg.n."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    raw = engine.run_main(oracle, cfg.n, cfg.schedule, gen, cfg.theta0,
                          collect_hessian=True)
    return HessianEstimate(raw.hess_sum / cfg.n, cfg.n)


# ---------------------------------------------------------------------------
# quantile simulation and region


@dataclass
class OracleQuantile:
    q_dagger: float
    delta: float
    mc_samples: int
    mc_error: float = float("nan")

    def __post_init__(self):
        if self.q_dagger < 0:
            raise ValueError("quantile cannot be negative")


def _hessian_matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, HessianEstimate) else np.asarray(h, dtype=float)


def _check_conditioning(hmat, cond_threshold):
    cond = np.linalg.cond(hmat)
    if not np.isfinite(cond) or cond > cond_threshold:
        raise IllConditionedHessianError(
            f"estimated Hessian condition number {cond:.3g} exceeds {cond_threshold:.3g}")


def _stable_pullback(hmat, alpha, sigma, mc_samples, gen):
    """Draws of H^{-1} L with L isotropic stable of index alpha and scale sigma."""
    draws = sample_isotropic_stable(alpha, sigma, hmat.shape[0], gen, mc_samples)
    return np.linalg.solve(hmat, draws.T).T


def _rank(delta, m):
    r = math.ceil((1.0 - delta) * m - 1e-9)
    return min(max(r, 1), m)


def _quantile_with_error(sorted_vals, delta):
    m = sorted_vals.size
    q = float(sorted_vals[_rank(delta, m) - 1])
    # 99% order-statistic bracket around the target rank
    slack = 2.576 * math.sqrt(delta * (1.0 - delta) / m)
    lo = sorted_vals[_rank(min(delta + slack, 1.0 - 1e-12), m) - 1]
    hi = sorted_vals[_rank(max(delta - slack, 1e-12), m) - 1]
    return q, float(hi - lo) / 2.0


def oracle_quantile(h_hat, alpha, sigma, phi, delta, mc_samples, rng, *,
                    cond_threshold=1e8) -> OracleQuantile:
    """Monte Carlo (1 - delta)-quantile of |phi(H_hat^{-1} L)|."""
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2)")
    if mc_samples < 1:
        raise ValueError("mc_samples must be positive")
    hmat = _hessian_matrix(h_hat)
    _check_conditioning(hmat, cond_threshold)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    vals = np.sort(np.abs(phi.apply_batch(_stable_pullback(hmat, alpha, sigma, mc_samples, gen))))
    q, err = _quantile_with_error(vals, delta)
    return OracleQuantile(q, delta, mc_samples, err)


def oracle_coordinate_quantiles(h_hat, alpha, sigma, delta, mc_samples, rng, *,
                                cond_threshold=1e8) -> np.ndarray:
    """Per-coordinate quantiles from a single set of shared stable draws."""
    hmat = _hessian_matrix(h_hat)
    _check_conditioning(hmat, cond_threshold)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    pulled = np.abs(_stable_pullback(hmat, alpha, sigma, mc_samples, gen))
    rank = _rank(delta, mc_samples)
    return np.sort(pulled, axis=0)[rank - 1]


def oracle_region(theta_bar, n, alpha, q: OracleQuantile, phi) -> ConfidenceRegion:
    """Region {theta : n**(1 - 1/alpha) * |phi(theta_bar - theta)| <= q_dagger}."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2)")
    half = q.q_dagger * float(n) ** (1.0 / alpha - 1.0)
    return ConfidenceRegion(np.asarray(theta_bar, dtype=float).copy(), half, phi, q.delta)


# ---------------------------------------------------------------------------
# final-iterate vs averaged tail-scale comparison (diagonal commuting case)


def scale_comparison(h_diag, sigma_diag, alpha, c, u):
    """Tail scales of the two limit laws along direction ``u``.

    For diagonal curvature H = diag(h) and dispersion S = diag(sigma) and a
    1/k step schedule with constant ``c`` above the stability threshold
    (1 - 1/alpha) / min(h), returns

        final  = c**(alpha-1) * integral_0^inf (u' e^{-Ht~} S e^{-Ht~} u)**(alpha/2) dt,
                 with h~ = h - (1 - 1/alpha)/c,
        polyak = (u' H^{-1} S H^{-1} u)**(alpha/2),

    computed by adaptive quadrature and in closed form respectively. The
    final-iterate scale always dominates on this subclass.
    """
    h = np.asarray(h_diag, dtype=float)
    sig = np.asarray(sigma_diag, dtype=float)
    u = np.asarray(u, dtype=float)
    if h.ndim != 1 or sig.shape != h.shape or u.shape != h.shape:
        raise ValueError("h_diag, sigma_diag and u must be 1-d of equal length")
    if np.any(h <= 0) or np.any(sig <= 0):
        raise ValueError("diagonal entries must be positive")
    if abs(np.linalg.norm(u) - 1.0) > 1e-8:
        raise ValueError("u must be a unit vector")
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2)")
    threshold = (1.0 - 1.0 / alpha) / float(np.min(h))
    if c <= threshold:
        raise InvalidScheduleError(
            f"step constant c = {c} must exceed (1 - 1/alpha)/min(h) = {threshold:.6g}")
    h_shift = h - (1.0 - 1.0 / alpha) / c
    w = u * u * sig

    def integrand(t):
        return float(np.sum(w * np.exp(-2.0 * h_shift * t))) ** (alpha / 2.0)

    integral, _ = quad(integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    final_scale = c ** (alpha - 1.0) * integral
    polyak_scale = float(np.sum(w / (h * h))) ** (alpha / 2.0)
    return final_scale, polyak_scale
