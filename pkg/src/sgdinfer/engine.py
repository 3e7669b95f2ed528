"""Chunked trajectory driver.

Data generation is vectorized in numpy per chunk; the sequential recursion
over the chunk runs in a kernel (compiled extension when available, pure
Python otherwise). Because both kernel backends consume the same
pre-generated arrays, a fixed seed gives reproducible trajectories within
a backend and agreement to roundoff across backends.

The driver knows three layouts:

* a single main trajectory (optionally accumulating the full second-moment
  matrix, a per-sample Hessian sum, partial-average moments for the
  random-scaling baseline, and second-moment snapshots at checkpoints);
* a sequence of short restarted calibration blocks on their own stream;
* the interleaved layout where the main trajectory and the current block
  consume the same per-step data (shared-randomness calibration).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import _py_core
from .errors import NonFiniteGradientError

CHUNK = 4096

_KERNEL_KINDS = ("linreg", "logreg", "quadratic")


@dataclass
class RawRun:
    """Accumulator state after a run; sums are unnormalized."""

    k: int
    theta: np.ndarray
    theta_sum: np.ndarray          # includes the initial point
    gsq_sum: float
    rs_s2: float
    sigma_sum: np.ndarray | None
    hess_sum: np.ndarray | None
    rs_sv: np.ndarray | None
    rs_sm: np.ndarray | None
    sigma_snapshots: list = field(default_factory=list)  # [(k, Sigma_k)]

    @property
    def theta_bar(self):
        return self.theta_sum / (self.k + 1)

    @property
    def trace_sigma(self):
        return self.gsq_sum / self.k if self.k > 0 else 0.0


class _State:
    __slots__ = ("theta", "theta_sum", "acc", "sigma_sum", "hess_sum",
                 "rs_sv", "rs_sm", "gbuf")

    def __init__(self, theta0, full_sigma, collect_hessian, random_scaling):
        d = theta0.size
        self.theta = theta0.copy()
        self.theta_sum = theta0.copy()
        self.acc = np.zeros(2)  # [sum ||g||^2, sum s^2]
        self.sigma_sum = np.zeros((d, d)) if full_sigma else None
        self.hess_sum = np.zeros((d, d)) if collect_hessian else None
        self.rs_sv = np.zeros(d) if random_scaling else None
        self.rs_sm = np.zeros((d, d)) if random_scaling else None
        self.gbuf = np.empty(d)

    def reset(self, theta0):
        self.theta[:] = theta0
        self.theta_sum[:] = theta0
        self.acc[0] = 0.0

    def raw(self, k):
        return RawRun(
            k=k,
            theta=self.theta,
            theta_sum=self.theta_sum,
            gsq_sum=float(self.acc[0]),
            rs_s2=float(self.acc[1]),
            sigma_sum=self.sigma_sum,
            hess_sum=self.hess_sum,
            rs_sv=self.rs_sv,
            rs_sm=self.rs_sm,
        )


def _as_theta0(theta0, dim):
    if theta0 is None:
        return np.zeros(dim)
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.ndim == 0:
        return np.full(dim, float(theta0))
    if theta0.shape != (dim,):
        raise ValueError(f"theta0 has shape {theta0.shape}, expected ({dim},)")
    return theta0.copy()


def _kernel_call(kern, oracle, batch, st: _State, etas, k0):
    kind = oracle.kind
    if kind == "linreg" or kind == "logreg":
        fn = kern.linreg_chunk if kind == "linreg" else kern.logreg_chunk
        return fn(st.theta, st.theta_sum, st.acc, batch["xs"], batch["ys"],
                  etas, k0, batch["extra"], st.sigma_sum, st.hess_sum,
                  st.rs_sv, st.rs_sm, st.gbuf)
    if kind == "quadratic":
        return kern.quadratic_chunk(st.theta, st.theta_sum, st.acc,
                                    oracle.hessian_matrix, batch["xis"],
                                    etas, k0, batch["extra"], st.sigma_sum,
                                    st.hess_sum, st.rs_sv, st.rs_sm, st.gbuf)
    raise ValueError(f"no kernel for oracle kind {kind!r}")


def _generic_steps(oracle, m, gen, st: _State, etas, k0):
    """Per-step fallback for oracles without a kernel layout."""
    for i in range(m):
        xi = oracle.draw(gen)
        g = np.asarray(oracle.gradient(st.theta, xi), dtype=float)
        if st.hess_sum is not None:
            st.hess_sum += oracle.hessian(st.theta, xi)
        if _py_core._advance(st.theta, st.theta_sum, st.acc, g, etas[i],
                             float(k0 + i + 1), st.sigma_sum, st.rs_sv, st.rs_sm):
            return i
    return -1


def run_main(oracle, n, schedule, gen, theta0=None, *, full_sigma=False,
             collect_hessian=False, random_scaling=False,
             sigma_checkpoints=(), chunk=CHUNK, context="main trajectory"):
    """Run one trajectory of length ``n`` and return the raw accumulator."""
    if n < 1:
        raise ValueError("n must be at least 1")
    st = _State(_as_theta0(theta0, oracle.dim), full_sigma or bool(sigma_checkpoints),
                collect_hessian, random_scaling)
    kern = _kernels.active()
    use_kernel = oracle.kind in _KERNEL_KINDS
    cps = sorted({int(c) for c in sigma_checkpoints if 1 <= int(c) <= n})
    snapshots = []
    pos = 0
    ci = 0
    while pos < n:
        limit = cps[ci] if ci < len(cps) else n
        m = min(chunk, limit - pos)
        etas = schedule.eta_array(pos, m)
        if use_kernel:
            batch = oracle.kernel_batch(gen, m)
            status = _kernel_call(kern, oracle, batch, st, etas, pos)
        else:
            status = _generic_steps(oracle, m, gen, st, etas, pos)
        if status >= 0:
            raise NonFiniteGradientError(pos + status + 1, context)
        pos += m
        while ci < len(cps) and pos == cps[ci]:
            snapshots.append((pos, st.sigma_sum / pos))
            ci += 1
    raw = st.raw(n)
    raw.sigma_snapshots = snapshots
    return raw


def run_blocks(oracle, block_len, n_blocks, schedule, gen, theta0=None,
               chunk=CHUNK):
    """Run ``n_blocks`` restarted trajectories of length ``block_len``.

    All blocks consume a single stream ``gen`` in order. Returns the block
    averaged iterates (n_blocks, d) and trace normalizers (n_blocks,).
    """
    d = oracle.dim
    t0 = _as_theta0(theta0, d)
    st = _State(t0, False, False, False)
    kern = _kernels.active()
    use_kernel = oracle.kind in _KERNEL_KINDS
    theta_bars = np.empty((n_blocks, d))
    traces = np.empty(n_blocks)
    for b in range(n_blocks):
        st.reset(t0)
        pos = 0
        while pos < block_len:
            m = min(chunk, block_len - pos)
            etas = schedule.eta_array(pos, m)
            if use_kernel:
                batch = oracle.kernel_batch(gen, m)
                status = _kernel_call(kern, oracle, batch, st, etas, pos)
            else:
                status = _generic_steps(oracle, m, gen, st, etas, pos)
            if status >= 0:
                raise NonFiniteGradientError(
                    pos + status + 1, f"calibration block {b + 1}")
            pos += m
        theta_bars[b] = st.theta_sum / (block_len + 1)
        traces[b] = st.acc[0] / block_len
    return theta_bars, traces


def run_interleaved(oracle, n, block_len, schedule, gen, theta0=None, *,
                    full_sigma=False, collect_hessian=False,
                    random_scaling=False, chunk=CHUNK):
    """Main trajectory plus calibration blocks driven by the same data.

    At global step k the current block applies the same sample to its own
    iterate (in-block step index k - b * block_len). Blocks restart from
    the initial point every ``block_len`` steps; steps beyond the last full
    block advance only the main trajectory.
    """
    if n < 1 or block_len < 1 or block_len > n:
        raise ValueError("need 1 <= block_len <= n")
    d = oracle.dim
    t0 = _as_theta0(theta0, d)
    main = _State(t0, full_sigma, collect_hessian, random_scaling)
    blk = _State(t0, False, False, False)
    kern = _kernels.active()
    use_kernel = oracle.kind in _KERNEL_KINDS
    n_blocks = n // block_len
    theta_bars = np.empty((n_blocks, d))
    traces = np.empty(n_blocks)
    pos = 0
    b = 0
    while pos < n:
        boundary = (b + 1) * block_len if b < n_blocks else n
        m = min(chunk, boundary - pos, n - pos)
        etas = schedule.eta_array(pos, m)
        if use_kernel:
            batch = oracle.kernel_batch(gen, m)
            status = _kernel_call(kern, oracle, batch, main, etas, pos)
            if status >= 0:
                raise NonFiniteGradientError(pos + status + 1, "main trajectory")
            if b < n_blocks:
                blk_etas = schedule.eta_array(pos - b * block_len, m)
                status = _kernel_call(kern, oracle, batch, blk, blk_etas,
                                      pos - b * block_len)
                if status >= 0:
                    raise NonFiniteGradientError(
                        pos - b * block_len + status + 1,
                        f"calibration block {b + 1}")
        else:
            status = _generic_interleaved(oracle, m, gen, main, blk, schedule,
                                          pos, b, block_len, n_blocks)
            if status >= 0:
                raise NonFiniteGradientError(pos + status + 1, "trajectory")
        pos += m
        if b < n_blocks and pos == (b + 1) * block_len:
            theta_bars[b] = blk.theta_sum / (block_len + 1)
            traces[b] = blk.acc[0] / block_len
            blk.reset(t0)
            b += 1
    return main.raw(n), theta_bars, traces


def _generic_interleaved(oracle, m, gen, main, blk, schedule, pos, b,
                         block_len, n_blocks):
    etas = schedule.eta_array(pos, m)
    for i in range(m):
        xi = oracle.draw(gen)
        g = np.asarray(oracle.gradient(main.theta, xi), dtype=float)
        if main.hess_sum is not None:
            main.hess_sum += oracle.hessian(main.theta, xi)
        if b < n_blocks:
            kb = pos + i - b * block_len
            gb = np.asarray(oracle.gradient(blk.theta, xi), dtype=float)
            eta_b = schedule.eta(kb + 1)
            if _py_core._advance(blk.theta, blk.theta_sum, blk.acc, gb, eta_b,
                                 float(kb + 1), None, None, None):
                return i
        if _py_core._advance(main.theta, main.theta_sum, main.acc, g, etas[i],
                             float(pos + i + 1), main.sigma_sum, main.rs_sv,
                             main.rs_sm):
            return i
    return -1
