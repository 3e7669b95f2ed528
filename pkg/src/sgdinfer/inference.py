"""Self-normalized confidence regions calibrated by subsampling.

The pivotal quantity for a candidate parameter ``theta`` is

    T = sqrt(n) * phi(theta_bar_n - theta) / sqrt(trace Sigma_n)

for a degree-1 homogeneous functional ``phi``. Its critical value is
estimated from many short restarted trajectories ("blocks"): block b of
length t_n contributes

    sqrt(t_n) * |phi(theta_bar^(b) - theta_bar_n)| / sqrt(trace Sigma^(b)),

and the (1 - delta) empirical quantile of these block statistics is the
data-driven critical value. The resulting region is
``{theta : |phi(theta_bar_n - theta)| <= q_hat * sqrt(trace Sigma_n / n)}``
with a closed boundary.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import DegenerateCalibrationError, DegenerateNormalizerError
from .rng import RngStream
from .sgd import RunningStats, StepSchedule


# ---------------------------------------------------------------------------
# functionals (degree-1 positively homogeneous, |phi| sublinear)


@dataclass(frozen=True)
class CoordinateProjection:
    """phi(x) = x[j]."""

    j: int

    def __post_init__(self):
        if self.j < 0:
            raise ValueError("coordinate index must be nonnegative")

    @property
    def name(self):
        return f"coord{self.j}"

    def __call__(self, x):
        return float(np.asarray(x)[self.j])

    def apply_batch(self, xs):
        return np.asarray(xs)[:, self.j]


class LinearProjection:
    """phi(x) = u' x for a unit vector u."""

    def __init__(self, u):
        u = np.asarray(u, dtype=float)
        norm = float(np.linalg.norm(u))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("projection direction must be a unit vector")
        self.u = u

    @property
    def name(self):
        return "linproj"

    def __call__(self, x):
        return float(self.u @ np.asarray(x))

    def apply_batch(self, xs):
        return np.asarray(xs) @ self.u


class LinfNorm:
    """phi(x) = max_j |x_j|."""

    name = "linf"

    def __call__(self, x):
        return float(np.max(np.abs(np.asarray(x))))

    def apply_batch(self, xs):
        return np.max(np.abs(np.asarray(xs)), axis=1)


@dataclass(frozen=True)
class LpNorm:
    """phi(x) = ||x||_p, p >= 1."""

    p: float

    def __post_init__(self):
        if not self.p >= 1.0:
            raise ValueError("p must be at least 1")

    @property
    def name(self):
        return f"l{self.p:g}"

    def __call__(self, x):
        return float(np.linalg.norm(np.asarray(x), ord=self.p))

    def apply_batch(self, xs):
        return np.linalg.norm(np.asarray(xs), ord=self.p, axis=1)


def coordinate_functionals(dim):
    return tuple(CoordinateProjection(j) for j in range(dim))


# ---------------------------------------------------------------------------
# statistic and quantile


def self_norm_stat(theta_bar, theta, trace_sigma, n, phi) -> float:
    """Signed self-normalized statistic; callers take |.| for region tests."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if trace_sigma < 0:
        raise ValueError("trace normalizer cannot be negative")
    if trace_sigma == 0:
        raise DegenerateNormalizerError(
            "second-moment trace is zero; every observed gradient was zero")
    diff = np.asarray(theta_bar, dtype=float) - np.asarray(theta, dtype=float)
    return math.sqrt(n) * phi(diff) / math.sqrt(trace_sigma)


def quantile(values, delta) -> float:
    """Smallest x whose empirical CDF weight reaches 1 - delta.

    Equals the ceil((1 - delta) * B)-th order statistic of the B values.
    A 1e-9 slack absorbs float roundoff in the rank computation so that
    e.g. B = 20, delta = 0.05 selects rank 19 and not 20.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size == 0:
        raise ValueError("cannot take a quantile of an empty list")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")
    rank = math.ceil((1.0 - delta) * vals.size - 1e-9)
    rank = min(max(rank, 1), vals.size)
    return float(vals[rank - 1])


# ---------------------------------------------------------------------------
# subsampling calibration


@dataclass(frozen=True)
class SubsampleConfig:
    """Block-length exponent: blocks have length floor(n**r)."""

    r: float

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ValueError("subsample exponent r must lie in (0, 1)")

    def block_length(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be at least 1")
        return min(max(int(math.floor(float(n) ** self.r)), 1), n)

    def n_blocks(self, n: int) -> int:
        return n // self.block_length(n)


@dataclass
class BlockSummaries:
    """Per-block averaged iterates and trace normalizers, pre-centering.

    Stored raw during the run (the centering point theta_bar_n is only
    known once the main trajectory finishes). Memory cost is O(B * d).
    """

    theta_bars: np.ndarray  # (B, d)
    traces: np.ndarray      # (B,)
    block_len: int


@dataclass
class Calibration:
    """Block statistics for one functional plus the calibrated critical value."""

    block_stats: np.ndarray
    q_hat: float
    delta: float
    dropped: int = 0


def _kept_block_values(blocks: BlockSummaries):
    keep = blocks.traces > 0.0
    dropped = int(blocks.traces.size - np.count_nonzero(keep))
    if not np.any(keep):
        raise DegenerateCalibrationError(
            "all calibration blocks had zero trace normalizers")
    if dropped:
        warnings.warn(
            f"dropped {dropped} calibration block(s) with zero normalizer; "
            "this usually indicates a degenerate gradient oracle",
            RuntimeWarning,
            stacklevel=3,
        )
    return keep, dropped


def block_statistics(blocks: BlockSummaries, theta_bar_n, phi):
    """Self-normalized block statistics centered at the full-run average."""
    keep, dropped = _kept_block_values(blocks)
    diffs = blocks.theta_bars[keep] - np.asarray(theta_bar_n, dtype=float)
    vals = (
        math.sqrt(blocks.block_len)
        * np.abs(phi.apply_batch(diffs))
        / np.sqrt(blocks.traces[keep])
    )
    return vals, dropped


def calibrate(blocks: BlockSummaries, theta_bar_n, phi, delta) -> Calibration:
    vals, dropped = block_statistics(blocks, theta_bar_n, phi)
    return Calibration(vals, quantile(vals, delta), delta, dropped)


def coordinate_quantiles(blocks: BlockSummaries, theta_bar_n, delta):
    """Calibrated critical value for every coordinate projection at once.

    Returns (q (d,), dropped). All coordinates share the block normalizers;
    only the numerator differs.
    """
    keep, dropped = _kept_block_values(blocks)
    diffs = blocks.theta_bars[keep] - np.asarray(theta_bar_n, dtype=float)
    vals = math.sqrt(blocks.block_len) * np.abs(diffs) / np.sqrt(blocks.traces[keep])[:, None]
    b = vals.shape[0]
    rank = math.ceil((1.0 - delta) * b - 1e-9)
    rank = min(max(rank, 1), b)
    return np.sort(vals, axis=0)[rank - 1], dropped


# ---------------------------------------------------------------------------
# regions


@dataclass
class ConfidenceRegion:
    """Region {theta : |phi(center - theta)| <= half_width}; boundary closed."""

    center: np.ndarray
    half_width: float
    functional: object
    delta: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.half_width < 0:
            raise ValueError("half width cannot be negative")

    def contains(self, theta) -> bool:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != self.center.shape:
            raise ValueError("dimension mismatch")
        return abs(self.functional(self.center - theta)) <= self.half_width


def region_contains(region: ConfidenceRegion, theta) -> bool:
    return region.contains(theta)


def subsampling_region(stats: RunningStats, n, q_hat, phi, delta) -> ConfidenceRegion:
    """Assemble the calibrated region from main-run statistics."""
    half = float(q_hat) * math.sqrt(stats.trace_sigma / n)
    return ConfidenceRegion(stats.theta_bar.copy(), half, phi, delta)


# ---------------------------------------------------------------------------
# end-to-end calibration run


def run_calibration(oracle, n, cfg: SubsampleConfig, schedule: StepSchedule,
                    phi, delta, rng: RngStream, *, theta0=None,
                    block_randomness: str = "fresh",
                    keep_full_sigma: bool = False):
    """Main trajectory plus subsampling calibration for one functional.

    ``block_randomness="fresh"`` gives the blocks their own stream (the
    default: strictly independent blocks); ``"shared"`` reuses the main
    trajectory's per-step samples for the current block. Block statistics
    are assembled only after the main run finishes because they center at
    the full-run average. Returns (RunningStats, Calibration).
    """
    t_n = cfg.block_length(n)
    n_blocks = cfg.n_blocks(n)
    if n < t_n:
        raise ValueError("n must be at least the block length")
    if block_randomness == "fresh":
        raw = engine.run_main(oracle, n, schedule, rng.child(0).generator(),
                              theta0, full_sigma=keep_full_sigma)
        theta_bars, traces = engine.run_blocks(
            oracle, t_n, n_blocks, schedule, rng.child(1).generator(), theta0)
    elif block_randomness == "shared":
        raw, theta_bars, traces = engine.run_interleaved(
            oracle, n, t_n, schedule, rng.child(0).generator(), theta0,
            full_sigma=keep_full_sigma)
    else:
        raise ValueError("block_randomness must be 'fresh' or 'shared'")
    stats = RunningStats._from_raw(raw)
    blocks = BlockSummaries(theta_bars, traces, t_n)
    return stats, calibrate(blocks, stats.theta_bar, phi, delta)
