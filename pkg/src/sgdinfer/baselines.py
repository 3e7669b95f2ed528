"""Random-scaling baseline for coordinatewise SGD inference.

Normalizes by a functional of the partial-average path,

    V = (1/n^2) * sum_s s^2 (theta_bar_s - theta_bar_n)(theta_bar_s - theta_bar_n)',

and uses the tabulated two-sided 95% critical value 6.747 for the interval
``theta_bar_n[j] +/- 6.747 * sqrt(V[j, j] / n)``. Only this nominal level
is supported; other levels would need the full critical-value table.

The streaming form keeps sums of s^2, s^2 * theta_bar_s and
s^2 * theta_bar_s theta_bar_s' so V can be assembled once theta_bar_n is
known.
"""

from __future__ import annotations

import math

import numpy as np

#: tabulated two-sided 95% critical value for the random-scaling statistic
RS_CRITICAL_975 = 6.747


def random_scaling_variance(s2_sum, sv_sum, sm_sum, theta_bar_n, n):
    """Assemble V from the streaming sufficient statistics."""
    tb = np.asarray(theta_bar_n, dtype=float)
    sv = np.asarray(sv_sum, dtype=float)
    sm = np.asarray(sm_sum, dtype=float)
    v = sm - np.outer(tb, sv) - np.outer(sv, tb) + s2_sum * np.outer(tb, tb)
    return v / float(n) ** 2


class RandomScalingState:
    """Streaming consumer of the partial-average path theta_bar_1, theta_bar_2, ..."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be at least 1")
        self.count = 0
        self.s2_sum = 0.0
        self.sv_sum = np.zeros(dim)
        self.sm_sum = np.zeros((dim, dim))

    def update(self, s: int, theta_bar_s) -> "RandomScalingState":
        if s != self.count + 1:
            raise ValueError(f"updates must arrive in order; expected s={self.count + 1}, got {s}")
        tb = np.asarray(theta_bar_s, dtype=float)
        w2 = float(s) ** 2
        self.s2_sum += w2
        self.sv_sum += w2 * tb
        self.sm_sum += w2 * np.outer(tb, tb)
        self.count = s
        return self

    def variance(self, theta_bar_n, n=None):
        n = self.count if n is None else n
        return random_scaling_variance(self.s2_sum, self.sv_sum, self.sm_sum,
                                       theta_bar_n, n)


def random_scaling_update(state: RandomScalingState, s: int, theta_bar_s) -> RandomScalingState:
    return state.update(s, theta_bar_s)


def random_scaling_interval(theta_bar_n, v_hat, n, j):
    """Closed coordinatewise interval theta_bar_n[j] +/- 6.747 sqrt(V[j,j]/n)."""
    v_hat = np.asarray(v_hat, dtype=float)
    vjj = float(v_hat[j, j])
    if vjj < 0:
        if vjj < -1e-12 * max(1.0, float(np.max(np.abs(v_hat)))):
            raise ValueError(f"V[{j},{j}] is negative: {vjj}")
        vjj = 0.0
    center = float(np.asarray(theta_bar_n, dtype=float)[j])
    half = RS_CRITICAL_975 * math.sqrt(vjj / n)
    return center - half, center + half
