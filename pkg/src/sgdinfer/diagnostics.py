"""Tail diagnostics and the mismatched-tails normalizer demonstration.

* Hill estimates of the tail index from the largest order statistics, plus
  a curve over a grid of tail sizes k;
* histogram and Hill-curve summaries of stochastic-gradient norms at a
  reference point;
* the eigenvalue-ratio series of the second-moment matrix for a quadratic
  model whose noise coordinates carry different tail indices (the ratio
  collapses toward zero, which is what rules out inverse-normalized
  ellipsoidal statistics in that regime).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import DegenerateSampleError
from .rng import RngStream
from .sgd import DEFAULT_SCHEDULE


def hill_estimate(samples, k: int) -> float:
    """Hill estimate of the tail index from the k largest observations.

    With descending order statistics X_(1) >= X_(2) >= ..., returns

        1 / mean(log(X_(i) / X_(k+1)), i = 1..k).

    Requires strictly positive samples and 1 <= k < len(samples).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need a 1-d array with at least two samples")
    if np.any(x <= 0):
        raise ValueError("Hill estimation requires strictly positive samples")
    if not 1 <= k < x.size:
        raise ValueError(f"k must satisfy 1 <= k < {x.size}, got {k}")
    desc = np.sort(x)[::-1]
    mean_log = float(np.mean(np.log(desc[:k] / desc[k])))
    return 1.0 / mean_log


@dataclass
class HillCurve:
    ks: np.ndarray
    alpha_hat: np.ndarray


def default_k_grid(n_samples: int, points: int = 25) -> np.ndarray:
    """Logarithmically spaced tail sizes between 10 and n_samples / 10."""
    lo = min(10, max(1, n_samples // 10))
    hi = max(lo, n_samples // 10)
    ks = np.unique(np.geomspace(lo, hi, points).astype(int))
    return ks[(ks >= 1) & (ks < n_samples)]


def hill_curve(samples, ks=None) -> HillCurve:
    x = np.asarray(samples, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Hill estimation requires strictly positive samples")
    if ks is None:
        ks = default_k_grid(x.size)
    ks = np.asarray(ks, dtype=int)
    if ks.size == 0 or np.any(ks < 1) or np.any(ks >= x.size):
        raise ValueError("k grid must lie in [1, len(samples))")
    desc = np.sort(x)[::-1]
    logs = np.log(desc)
    csum = np.cumsum(logs)
    alpha_hat = 1.0 / (csum[ks - 1] / ks - logs[ks])
    return HillCurve(ks, alpha_hat)


@dataclass
class GradientNormSummary:
    counts: np.ndarray
    bin_edges: np.ndarray
    hill: HillCurve
    n_draws: int
    meta: dict


def gradient_norm_summary(oracle, theta_ref, n_draws, rng, *, bins=60,
                          ks=None, chunk=200_000) -> GradientNormSummary:
    """Norm histogram and Hill curve of gradients drawn at ``theta_ref``."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    default_grid = ks is None
    if default_grid:
        ks = default_k_grid(n_draws)
    ks = np.asarray(ks, dtype=int)
    if n_draws < 10 * int(np.max(ks)):
        raise ValueError("n_draws must be at least 10x the largest Hill tail size")
    theta_ref = np.asarray(theta_ref, dtype=float)
    norms = np.empty(n_draws)
    pos = 0
    while pos < n_draws:
        m = min(chunk, n_draws - pos)
        g = oracle.gradient_sample(theta_ref, gen, m)
        norms[pos:pos + m] = np.linalg.norm(g, axis=1)
        pos += m
    positive = norms[norms > 0]
    if positive.size == 0:
        raise DegenerateSampleError(
            "all gradient norms are zero at the reference point; "
            "tail diagnostics are undefined")
    if positive.size <= int(np.max(ks)):
        raise DegenerateSampleError(
            "too few nonzero gradient norms for the requested Hill grid")
    counts, edges = np.histogram(norms, bins=bins)
    meta = {
        "bins": bins,
        "bin_policy": "equal-width over the full sample range",
        "k_grid": "log-spaced in [10, n/10]" if default_grid else "caller-provided",
        "zero_norms": int(n_draws - positive.size),
    }
    return GradientNormSummary(counts, edges, hill_curve(positive, ks), n_draws, meta)


# ---------------------------------------------------------------------------
# second-moment degeneracy demonstration


@dataclass
class ConditionSeries:
    ns: np.ndarray
    ratios: np.ndarray  # lambda_min / lambda_max, in (0, 1]


def eigenvalue_ratio(mat) -> float:
    """lambda_min / lambda_max of a symmetric PSD matrix; closed form for 2x2."""
    m = np.asarray(mat, dtype=float)
    if m.shape == (2, 2):
        a, b, c = m[0, 0], m[0, 1], m[1, 1]
        half_gap = math.hypot((a - c) / 2.0, b)
        mean = (a + c) / 2.0
        lo, hi = mean - half_gap, mean + half_gap
    else:
        w = np.linalg.eigvalsh(m)
        lo, hi = float(w[0]), float(w[-1])
    if hi <= 0:
        raise DegenerateSampleError("second-moment matrix is zero")
    return lo / hi


def singular_normalizer_demo(model, n, rng, *, schedule=DEFAULT_SCHEDULE,
                             checkpoints=None) -> ConditionSeries:
    """Eigenvalue-ratio series of Sigma_k along one quadratic trajectory.

    With noise coordinates of different tail indices the ratio decays
    toward zero as the heavier coordinate dominates the normalizer; with
    equal indices it stays of order one.
    """
    if checkpoints is None:
        checkpoints = [10**e for e in range(3, 1 + int(math.log10(n)))]
        if checkpoints[-1] != n:
            checkpoints.append(n)
    checkpoints = sorted({int(c) for c in checkpoints if 1 <= int(c) <= n})
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    raw = engine.run_main(model, n, schedule, gen, None,
                          full_sigma=True, sigma_checkpoints=checkpoints)
    ns = np.array([k for k, _ in raw.sigma_snapshots])
    ratios = np.array([eigenvalue_ratio(s) for _, s in raw.sigma_snapshots])
    return ConditionSeries(ns, ratios)
