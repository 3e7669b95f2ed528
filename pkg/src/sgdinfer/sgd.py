"""The averaged-SGD recursion with streaming second-moment accumulation.

One step with step size ``eta_k = c * k**-rho`` updates

    theta_k   = theta_{k-1} - eta_k * g,
    theta_bar = mean of theta_0 .. theta_k          (the initial point is
                folded in with weight 1/(k+1)),
    Sigma_k   = (1/k) * sum of g_i g_i'             (trace only by default).

``sgd_step`` advances a :class:`RunningStats` one gradient at a time;
``run_trajectory`` drives whole runs through the chunked engine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .errors import NonFiniteGradientError
from .rng import RngStream


@dataclass(frozen=True)
class StepSchedule:
    """Polynomially decaying step size eta_k = c * k**-rho.

    ``rho`` may be anything in (0, 1]; the inference procedures want
    rho in (1/2, 1) but the recursion itself does not care.
    """

    c: float
    rho: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("step constant c must be positive")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError("step exponent rho must lie in (0, 1]")

    def eta(self, k: int) -> float:
        if k < 1:
            raise ValueError("step index starts at 1")
        return self.c * float(k) ** (-self.rho)

    def eta_array(self, k0: int, m: int) -> np.ndarray:
        """Step sizes for steps k0+1 .. k0+m."""
        ks = np.arange(k0 + 1, k0 + m + 1, dtype=float)
        return self.c * ks ** (-self.rho)


#: schedule used by default throughout the experiments: eta_k = 0.5 * k**-0.6
DEFAULT_SCHEDULE = StepSchedule(c=0.5, rho=0.6)


class RunningStats:
    """Streaming state of one trajectory.

    Tracks the current iterate, the running average (initial point
    included), and the second-moment trace; the full matrix is kept only
    on request. Internally sums are stored and normalized on access so the
    streamed values match an offline recomputation to roundoff.
    """

    __slots__ = ("k", "theta", "_theta_sum", "_gsq_sum", "_sigma_sum")

    def __init__(self, theta0, keep_full_sigma: bool = False):
        theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
        self.k = 0
        self.theta = theta0.copy()
        self._theta_sum = theta0.copy()
        self._gsq_sum = 0.0
        self._sigma_sum = np.zeros((theta0.size, theta0.size)) if keep_full_sigma else None

    @property
    def dim(self) -> int:
        return self.theta.size

    @property
    def theta_bar(self) -> np.ndarray:
        return self._theta_sum / (self.k + 1)

    @property
    def trace_sigma(self) -> float:
        return self._gsq_sum / self.k if self.k > 0 else 0.0

    @property
    def sigma(self):
        """Full second-moment matrix, or None when only the trace is tracked."""
        if self._sigma_sum is None:
            return None
        if self.k == 0:
            return np.zeros_like(self._sigma_sum)
        return self._sigma_sum / self.k

    @classmethod
    def _from_raw(cls, raw: engine.RawRun) -> "RunningStats":
        out = cls(raw.theta_sum * 0.0, keep_full_sigma=False)
        out.k = raw.k
        out.theta = raw.theta
        out._theta_sum = raw.theta_sum
        out._gsq_sum = raw.gsq_sum
        out._sigma_sum = raw.sigma_sum
        return out


def sgd_step(stats: RunningStats, grad, schedule: StepSchedule) -> RunningStats:
    """Advance all streaming quantities by one step; mutates and returns ``stats``."""
    g = np.asarray(grad, dtype=float)
    if g.shape != stats.theta.shape:
        raise ValueError(f"gradient has shape {g.shape}, expected {stats.theta.shape}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(stats.k + 1)
    k = stats.k + 1
    stats.theta -= schedule.eta(k) * g
    stats._theta_sum += stats.theta
    stats._gsq_sum += float(g @ g)
    if stats._sigma_sum is not None:
        stats._sigma_sum += np.outer(g, g)
    stats.k = k
    return stats


@dataclass(frozen=True)
class TrajectoryConfig:
    n: int
    theta0: object = None  # scalar, vector, or None for the origin
    schedule: StepSchedule = DEFAULT_SCHEDULE
    keep_full_sigma: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("iteration budget n must be at least 1")


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def run_trajectory(oracle, cfg: TrajectoryConfig, rng) -> RunningStats:
    """Run ``cfg.n`` SGD steps against ``oracle``; deterministic given the stream."""
    raw = engine.run_main(
        oracle,
        cfg.n,
        cfg.schedule,
        _as_generator(rng),
        cfg.theta0,
        full_sigma=cfg.keep_full_sigma,
    )
    return RunningStats._from_raw(raw)
