"""Gradient oracles for the synthetic test problems.

Each oracle owns a model with a known minimizer ``theta_star`` and answers
stochastic gradient queries ``g(theta, xi)`` with ``E[g(theta, xi)]`` equal
to the population gradient. Oracles expose two sampling surfaces:

* ``draw`` / ``gradient`` / ``hessian`` for single queries (tests, generic
  fallback driver);
* ``kernel_batch`` / ``gradient_sample`` for vectorized chunk generation
  consumed by the trajectory engine and the diagnostics.

Oracles are immutable; the caller owns the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .noise import (
    GaussianNoise,
    ParetoSpec,
    SymmetricParetoNoise,
    ZeroNoise,
    _psd_sqrt,
)


def _check_dim(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({dim},)")
    return theta


@dataclass(frozen=True)
class LinearRegressionModel:
    """y = x' theta_star + eps with Gaussian covariates and additive noise.

    ``g(theta, (x, eps)) = x (x' theta - y)``.
    """

    theta_star: np.ndarray
    covariance: np.ndarray
    noise: object  # scalar noise spec (dim 1)
    _chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        cov = np.asarray(self.covariance, dtype=float)
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "covariance", cov)
        if cov.shape != (theta.size, theta.size):
            raise ValueError("covariance shape does not match dimension")
        object.__setattr__(self, "_chol", _psd_sqrt(cov))
        if getattr(self.noise, "dim", 1) != 1:
            raise ValueError("linear regression noise must be scalar")

    kind = "linreg"

    @property
    def dim(self):
        return self.theta_star.size

    def draw(self, gen):
        x = self._chol @ gen.standard_normal(self.dim)
        eps = float(np.asarray(self.noise.sample(gen, 1)).ravel()[0])
        return x, eps

    def gradient(self, theta, xi):
        theta = _check_dim(theta, self.dim)
        x, eps = xi
        y = x @ self.theta_star + eps
        return x * (x @ theta - y)

    def hessian(self, theta, xi):
        x = xi[0]
        return np.outer(x, x)

    def kernel_batch(self, gen, m):
        xs = gen.standard_normal((m, self.dim)) @ self._chol.T
        eps = np.asarray(self.noise.sample(gen, m), dtype=float).reshape(m)
        ys = xs @ self.theta_star + eps
        return {"xs": xs, "ys": ys, "extra": None}

    def gradient_sample(self, theta, gen, m):
        theta = _check_dim(theta, self.dim)
        b = self.kernel_batch(gen, m)
        s = b["xs"] @ theta - b["ys"]
        return b["xs"] * s[:, None]


@dataclass(frozen=True)
class LogisticRegressionModel:
    """Binary logistic model with labels in {-1, +1} and heavy-tailed covariates.

    Covariate coordinates are independent symmetric Pareto draws whose
    indices may differ; labels satisfy P(y = 1 | x) = sigmoid(x' theta_star).
    The gradient is ``-y * sigmoid(-y x' theta) * x``, evaluated with an
    overflow-safe sigmoid (heavy-tailed covariates make |x' theta| huge).
    """

    theta_star: np.ndarray
    covariates: SymmetricParetoNoise

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float)
        object.__setattr__(self, "theta_star", theta)
        if self.covariates.dim != theta.size:
            raise ValueError("covariate spec dimension does not match theta_star")

    kind = "logreg"

    @classmethod
    def homogeneous(cls, theta_star, alpha, lam=1.0):
        d = np.asarray(theta_star).size
        return cls(theta_star, SymmetricParetoNoise.homogeneous(alpha, lam, d))

    @classmethod
    def heterogeneous(cls, theta_star, alpha, gen, lam=1.0, lightest=2.5):
        """First coordinate index ``alpha``, last ``lightest``, middles uniform on (alpha, 2)."""
        d = np.asarray(theta_star).size
        if d < 2:
            raise ValueError("heterogeneous covariates need dimension >= 2")
        indices = np.empty(d)
        indices[0] = alpha
        indices[-1] = lightest
        if d > 2:
            indices[1:-1] = gen.uniform(alpha, 2.0, d - 2)
        specs = tuple(ParetoSpec(a, lam) for a in indices)
        return cls(theta_star, SymmetricParetoNoise(specs))

    @property
    def dim(self):
        return self.theta_star.size

    def draw(self, gen):
        x = np.atleast_1d(self.covariates.sample(gen, 1)).reshape(self.dim)
        p = expit(x @ self.theta_star)
        y = 1.0 if gen.random() < p else -1.0
        return x, y

    def gradient(self, theta, xi):
        theta = _check_dim(theta, self.dim)
        x, y = xi
        w = expit(-y * (x @ theta))
        return -y * w * x

    def hessian(self, theta, xi):
        theta = _check_dim(theta, self.dim)
        x, y = xi
        w = expit(-y * (x @ theta))
        return w * (1.0 - w) * np.outer(x, x)

    def kernel_batch(self, gen, m):
        xs = np.asarray(self.covariates.sample(gen, m), dtype=float).reshape(m, self.dim)
        u = gen.random(m)
        ys = np.where(u < expit(xs @ self.theta_star), 1.0, -1.0)
        return {"xs": xs, "ys": ys, "extra": None}

    def gradient_sample(self, theta, gen, m):
        theta = _check_dim(theta, self.dim)
        b = self.kernel_batch(gen, m)
        w = expit(-b["ys"] * (b["xs"] @ theta))
        return -(b["ys"] * w)[:, None] * b["xs"]


@dataclass(frozen=True)
class QuadraticModel:
    """g(theta, xi) = H theta + xi with symmetric positive definite H.

    The minimizer is the origin. The additive noise may mix coordinates of
    different tail indices, which is what the singular-normalizer
    demonstration exploits.
    """

    hessian_matrix: np.ndarray
    noise: object

    def __post_init__(self):
        h = np.asarray(self.hessian_matrix, dtype=float)
        object.__setattr__(self, "hessian_matrix", h)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("H must be square")
        if not np.allclose(h, h.T, atol=1e-10):
            raise ValueError("H must be symmetric")
        if np.min(np.linalg.eigvalsh(h)) <= 0:
            raise ValueError("H must be positive definite")
        if getattr(self.noise, "dim", None) != h.shape[0]:
            raise ValueError("noise dimension must match H")

    kind = "quadratic"

    @property
    def dim(self):
        return self.hessian_matrix.shape[0]

    @property
    def theta_star(self):
        return np.zeros(self.dim)

    def draw(self, gen):
        return np.atleast_1d(self.noise.sample(gen, 1)).reshape(self.dim)

    def gradient(self, theta, xi):
        theta = _check_dim(theta, self.dim)
        return self.hessian_matrix @ theta + xi

    def hessian(self, theta, xi):
        return self.hessian_matrix.copy()

    def kernel_batch(self, gen, m):
        xis = np.asarray(self.noise.sample(gen, m), dtype=float).reshape(m, self.dim)
        return {"xis": xis, "extra": None}

    def gradient_sample(self, theta, gen, m):
        theta = _check_dim(theta, self.dim)
        b = self.kernel_batch(gen, m)
        return b["xis"] + self.hessian_matrix @ theta


def mismatched_tails_hessian() -> np.ndarray:
    """The 2x2 curvature used in the singular-normalizer demonstration.

    Inverse of [[1, 1], [1, 2]], i.e. [[2, -1], [-1, 1]].
    """
    return np.array([[2.0, -1.0], [-1.0, 1.0]])


def zero_noise_linreg(theta_star, covariance):
    """Linear regression with eps identically zero (useful in tests)."""
    return LinearRegressionModel(theta_star, covariance, ZeroNoise(1))


def gaussian_noise_linreg(theta_star, covariance, variance=1.0):
    return LinearRegressionModel(theta_star, covariance, GaussianNoise.scalar(variance))
