"""Pure-Python fallback for the compiled recursion kernels.

Signature-compatible with ``_core``; used when the extension is not built
or when ``SGDINFER_PURE_PYTHON=1``. The per-step recursion cannot be
vectorized (each iterate depends on the previous one), so this backend is
orders of magnitude slower; the benchmark script quantifies the gap.
"""

from __future__ import annotations

import numpy as np


def _advance(theta, theta_sum, acc, g, eta, s_index, sigma_sum, rs_sv, rs_sm):
    if not np.all(np.isfinite(g)):
        return 1
    theta -= eta * g
    acc[0] += g @ g
    theta_sum += theta
    if sigma_sum is not None:
        sigma_sum += np.outer(g, g)
    if rs_sv is not None:
        w2 = s_index * s_index
        acc[1] += w2
        tb = theta_sum / (s_index + 1.0)
        rs_sv += w2 * tb
        rs_sm += w2 * np.outer(tb, tb)
    return 0


def linreg_chunk(theta, theta_sum, acc, xs, ys, etas, k0,
                 extra, sigma_sum, hess_sum, rs_sv, rs_sm, gbuf):
    m = xs.shape[0]
    for i in range(m):
        x = xs[i]
        g = (x @ theta - ys[i]) * x
        if extra is not None:
            g = g + extra[i]
        if hess_sum is not None:
            hess_sum += np.outer(x, x)
        if _advance(theta, theta_sum, acc, g, etas[i], float(k0 + i + 1),
                    sigma_sum, rs_sv, rs_sm):
            return i
    return -1


def _sigmoid_neg(z):
    """sigmoid(-z) without overflow for large |z|."""
    if z >= 0.0:
        ez = np.exp(-z)
        return ez / (1.0 + ez)
    return 1.0 / (1.0 + np.exp(z))


def logreg_chunk(theta, theta_sum, acc, xs, ys, etas, k0,
                 extra, sigma_sum, hess_sum, rs_sv, rs_sm, gbuf):
    m = xs.shape[0]
    for i in range(m):
        x = xs[i]
        y = ys[i]
        w = _sigmoid_neg(y * (x @ theta))
        g = (-y * w) * x
        if extra is not None:
            g = g + extra[i]
        if hess_sum is not None:
            hess_sum += (w * (1.0 - w)) * np.outer(x, x)
        if _advance(theta, theta_sum, acc, g, etas[i], float(k0 + i + 1),
                    sigma_sum, rs_sv, rs_sm):
            return i
    return -1


def quadratic_chunk(theta, theta_sum, acc, hmat, xis, etas, k0,
                    extra, sigma_sum, hess_sum, rs_sv, rs_sm, gbuf):
    m = xis.shape[0]
    for i in range(m):
        g = hmat @ theta + xis[i]
        if extra is not None:
            g = g + extra[i]
        if hess_sum is not None:
            hess_sum += hmat
        if _advance(theta, theta_sum, acc, g, etas[i], float(k0 + i + 1),
                    sigma_sum, rs_sv, rs_sm):
            return i
    return -1
