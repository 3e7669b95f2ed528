"""Seedable samplers for the gradient-noise laws used in the experiments.

Four families are supported:

* symmetric Pareto with tail index ``alpha`` and scale ``lam`` (density
  ``alpha * lam**alpha / (2 * (lam + |t|)**(alpha + 1))``), sampled by the
  exact inverse CDF;
* centered Gaussian with an arbitrary PSD covariance;
* isotropic stable vectors with characteristic function
  ``exp(-sigma * ||u||**alpha)``, built by subordinating a Gaussian with a
  positive stable variable;
* symmetric Pareto whose tail index is redrawn uniformly from an interval
  at every query ("varying index").

Specs are immutable; a numpy ``Generator`` supplies all randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TINY = np.finfo(float).tiny


# ---------------------------------------------------------------------------
# symmetric Pareto


@dataclass(frozen=True)
class ParetoSpec:
    """Tail index and scale of a symmetric Pareto law.

    ``alpha > 1`` so the mean exists (and is zero by symmetry); the
    variance is infinite whenever ``alpha <= 2``.
    """

    alpha: float
    lam: float = 1.0

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"tail index must exceed 1, got {self.alpha}")
        if not self.lam > 0.0:
            raise ValueError(f"scale must be positive, got {self.lam}")

    def tail_prob(self, t):
        """P(|X| > t) = (lam / (lam + t))**alpha for t >= 0."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("threshold must be nonnegative")
        return (self.lam / (self.lam + t)) ** self.alpha


def sym_pareto_ppf(u, alpha, lam=1.0):
    """Inverse CDF of the symmetric Pareto law.

    Maps u in (0, 1) to sign(u - 1/2) * lam * ((2 min(u, 1-u))**(-1/alpha) - 1).
    u = 1/2 maps to the symmetry center 0.
    """
    u = np.asarray(u, dtype=float)
    v = 2.0 * np.minimum(u, 1.0 - u)
    # u == 0.0 would map to -inf; clamp to the smallest normal instead so a
    # one-in-2**53 draw cannot poison a whole trajectory with infinities.
    v = np.maximum(v, _TINY)
    mag = lam * (v ** (-1.0 / alpha) - 1.0)
    return np.sign(u - 0.5) * mag


def sample_sym_pareto(spec: ParetoSpec, gen: np.random.Generator, size=None):
    """Draw from the symmetric Pareto law; scalar when ``size`` is None."""
    u = gen.random(size)
    return sym_pareto_ppf(u, spec.alpha, spec.lam)


def stable_limit_scale(spec: ParetoSpec) -> float:
    """Scale ``sigma`` of the stable limit of normalized symmetric Pareto sums.

    For i.i.d. draws X_i from ``spec``, n**(-1/alpha) * sum(X_i) converges to
    a symmetric alpha-stable law with characteristic function
    exp(-sigma * |u|**alpha) where

        sigma = lam**alpha * Gamma(2 - alpha) * cos(pi * alpha / 2) / (1 - alpha).

    The constant comes from integrating (1 - cos) against the limiting tail
    measure of the summands; it is checked against an empirical
    characteristic function in the test suite.
    """
    a = spec.alpha
    if not 1.0 < a < 2.0:
        raise ValueError("stable limit scale requires alpha in (1, 2)")
    c = math.gamma(2.0 - a) * math.cos(math.pi * a / 2.0) / (1.0 - a)
    return spec.lam**a * c


# ---------------------------------------------------------------------------
# Gaussian


def _psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Matrix square root of a symmetric PSD matrix; rejects non-PSD input."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be a square matrix")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise ValueError("covariance must be symmetric")
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    # semidefinite case (e.g. the zero matrix): eigenvalue square root
    w, v = np.linalg.eigh(cov)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(w))))
    if np.min(w) < -tol:
        raise ValueError("covariance is not positive semidefinite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(cov, gen: np.random.Generator, size=None):
    """Centered Gaussian vectors with the given covariance.

    Returns shape (d,) for ``size=None`` and (size, d) otherwise.
    """
    root = _psd_sqrt(cov)
    d = root.shape[0]
    if size is None:
        return root @ gen.standard_normal(d)
    return gen.standard_normal((size, d)) @ root.T


def toeplitz_covariance(dim: int, q: float) -> np.ndarray:
    """Covariance with entries q**|i - j|."""
    idx = np.arange(dim)
    return q ** np.abs(idx[:, None] - idx[None, :]).astype(float)


# ---------------------------------------------------------------------------
# isotropic stable


def _positive_stable(a: float, gen: np.random.Generator, size):
    """Totally skewed positive stable draws with Laplace transform exp(-s**a).

    Zolotarev/Kanter construction for a in (0, 1): with U ~ Uniform(0, pi)
    and E ~ Exp(1),

        A = [sin(a U) / sin(U)**(1/a)] * [sin((1-a) U) / E]**((1-a)/a).
    """
    if not 0.0 < a < 1.0:
        raise ValueError("positive stable exponent must lie in (0, 1)")
    u = np.pi * np.maximum(gen.random(size), _TINY)
    e = np.maximum(gen.standard_exponential(size), _TINY)
    return (
        np.sin(a * u)
        * np.sin(u) ** (-1.0 / a)
        * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    )


def sample_isotropic_stable(alpha, sigma, dim, gen: np.random.Generator, size=None):
    """Isotropic stable vectors with char. fn. exp(-sigma * ||u||**alpha).

    Subordinated Gaussian: X = sigma**(1/alpha) * sqrt(2 A) * Z with
    A positive (alpha/2)-stable (Laplace transform exp(-s**(alpha/2))) and
    Z standard normal. The sqrt(2) factor makes the empirical characteristic
    function match the target exactly; the test suite verifies this.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    if dim < 1:
        raise ValueError("dim must be at least 1")
    m = 1 if size is None else int(size)
    a = _positive_stable(alpha / 2.0, gen, m)
    z = gen.standard_normal((m, dim))
    x = sigma ** (1.0 / alpha) * np.sqrt(2.0 * a)[:, None] * z
    if size is None:
        return x[0]
    return x


# ---------------------------------------------------------------------------
# varying tail index


def sample_varying_index(interval, lam, gen: np.random.Generator, size=None):
    """Symmetric Pareto draw whose index is first drawn uniformly on ``interval``.

    Each query redraws the index, so consecutive draws mix different tail
    weights.
    """
    lo, hi = interval
    if not (1.0 < lo < hi):
        raise ValueError(f"interval must satisfy 1 < lo < hi, got [{lo}, {hi})")
    alphas = gen.uniform(lo, hi, size)
    u = gen.random(size)
    v = np.maximum(2.0 * np.minimum(u, 1.0 - u), _TINY)
    return np.sign(u - 0.5) * lam * (v ** (-1.0 / alphas) - 1.0)


def varying_index_tail_prob(interval, lam, t, quad_points=2001):
    """P(|X| > t) for the varying-index mixture, by 1-d quadrature over the index."""
    lo, hi = interval
    grid = np.linspace(lo, hi, quad_points)
    c = lam / (lam + t)
    return float(np.trapz(c**grid, grid) / (hi - lo))


# ---------------------------------------------------------------------------
# declarative noise specs (vector-valued sampling for the models)


@dataclass(frozen=True)
class SymmetricParetoNoise:
    """Independent symmetric Pareto coordinates, possibly with different specs."""

    specs: tuple

    def __post_init__(self):
        if len(self.specs) == 0:
            raise ValueError("need at least one coordinate spec")
        for s in self.specs:
            if not isinstance(s, ParetoSpec):
                raise TypeError("specs must be ParetoSpec instances")

    @classmethod
    def homogeneous(cls, alpha, lam, dim):
        return cls((ParetoSpec(alpha, lam),) * dim)

    @property
    def dim(self):
        return len(self.specs)

    def sample(self, gen, size):
        alphas = np.array([s.alpha for s in self.specs])
        lams = np.array([s.lam for s in self.specs])
        u = gen.random((size, self.dim))
        v = np.maximum(2.0 * np.minimum(u, 1.0 - u), _TINY)
        out = np.sign(u - 0.5) * lams * (v ** (-1.0 / alphas) - 1.0)
        return out[:, 0] if self.dim == 1 else out


@dataclass(frozen=True)
class GaussianNoise:
    """Centered Gaussian noise; ``cov`` is stored as a nested tuple for hashability."""

    cov: tuple

    def __post_init__(self):
        _psd_sqrt(self.matrix)  # validate eagerly

    @classmethod
    def from_matrix(cls, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(tuple(map(tuple, cov)))

    @classmethod
    def scalar(cls, variance):
        return cls.from_matrix([[float(variance)]])

    @property
    def matrix(self):
        return np.asarray(self.cov, dtype=float)

    @property
    def dim(self):
        return len(self.cov)

    def sample(self, gen, size):
        out = sample_gaussian(self.matrix, gen, size)
        return out[:, 0] if self.dim == 1 else out


@dataclass(frozen=True)
class VaryingIndexNoise:
    """Per-query uniform tail index on [alpha_lo, alpha_hi).

    With ``share_across_dims`` one index is drawn per query and applied to
    every coordinate; otherwise each coordinate draws its own index.
    """

    alpha_lo: float
    alpha_hi: float
    lam: float = 1.0
    dim: int = 1
    share_across_dims: bool = True

    def __post_init__(self):
        if not (1.0 < self.alpha_lo < self.alpha_hi):
            raise ValueError("need 1 < alpha_lo < alpha_hi")
        if self.lam <= 0 or self.dim < 1:
            raise ValueError("lam must be positive and dim >= 1")

    def sample(self, gen, size):
        if self.share_across_dims:
            alphas = gen.uniform(self.alpha_lo, self.alpha_hi, size)[:, None]
        else:
            alphas = gen.uniform(self.alpha_lo, self.alpha_hi, (size, self.dim))
        u = gen.random((size, self.dim))
        v = np.maximum(2.0 * np.minimum(u, 1.0 - u), _TINY)
        out = np.sign(u - 0.5) * self.lam * (v ** (-1.0 / alphas) - 1.0)
        return out[:, 0] if self.dim == 1 else out


@dataclass(frozen=True)
class IsotropicStableNoise:
    alpha: float
    sigma: float
    dim: int

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        if self.sigma <= 0 or self.dim < 1:
            raise ValueError("sigma must be positive and dim >= 1")

    def sample(self, gen, size):
        out = sample_isotropic_stable(self.alpha, self.sigma, self.dim, gen, size)
        return out[:, 0] if self.dim == 1 else out


@dataclass(frozen=True)
class ZeroNoise:
    """Deterministic zero noise (degenerate limit used in tests and demos)."""

    dim: int = 1

    def sample(self, gen, size):
        shape = size if self.dim == 1 else (size, self.dim)
        return np.zeros(shape)
