# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled recursion kernels.

Each function advances one trajectory over a chunk of pre-generated data:
the iterate, the running iterate sum, the running squared-gradient norm,
and optionally the full second-moment sum, a per-sample Hessian sum and
the partial-average moments used by the random-scaling baseline. Data
generation stays in numpy so the compiled and pure-Python backends consume
identical streams.

Returns -1 on success, else the 0-based row index of the first step whose
gradient had a non-finite component (state is left at the pre-step value).
"""

from libc.math cimport exp, isfinite


cdef inline int _advance(
    double[::1] theta,
    double[::1] theta_sum,
    double[::1] acc,
    double[::1] g,
    double eta,
    double s_index,
    double[:, ::1] sigma_sum,
    bint use_sigma,
    double[::1] rs_sv,
    double[:, ::1] rs_sm,
    bint use_rs,
) noexcept:
    cdef Py_ssize_t d = theta.shape[0]
    cdef Py_ssize_t j, l
    cdef double gj, gsq = 0.0, tbj, w2, denom
    for j in range(d):
        if not isfinite(g[j]):
            return 1
    for j in range(d):
        gj = g[j]
        theta[j] -= eta * gj
        gsq += gj * gj
        theta_sum[j] += theta[j]
    acc[0] += gsq
    if use_sigma:
        for j in range(d):
            gj = g[j]
            for l in range(d):
                sigma_sum[j, l] += gj * g[l]
    if use_rs:
        w2 = s_index * s_index
        acc[1] += w2
        denom = s_index + 1.0
        for j in range(d):
            rs_sv[j] += w2 * (theta_sum[j] / denom)
        for j in range(d):
            tbj = theta_sum[j] / denom
            for l in range(d):
                rs_sm[j, l] += w2 * tbj * (theta_sum[l] / denom)
    return 0


def linreg_chunk(
    double[::1] theta,
    double[::1] theta_sum,
    double[::1] acc,
    double[:, ::1] xs,
    double[::1] ys,
    double[::1] etas,
    long long k0,
    double[:, ::1] extra,
    double[:, ::1] sigma_sum,
    double[:, ::1] hess_sum,
    double[::1] rs_sv,
    double[:, ::1] rs_sm,
    double[::1] gbuf,
):
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t d = xs.shape[1]
    cdef bint use_extra = extra is not None
    cdef bint use_sigma = sigma_sum is not None
    cdef bint use_hess = hess_sum is not None
    cdef bint use_rs = rs_sv is not None
    cdef Py_ssize_t i, j, l
    cdef double s, xij
    for i in range(m):
        s = 0.0
        for j in range(d):
            s += xs[i, j] * theta[j]
        s -= ys[i]
        for j in range(d):
            gbuf[j] = s * xs[i, j]
        if use_extra:
            for j in range(d):
                gbuf[j] += extra[i, j]
        if use_hess:
            for j in range(d):
                xij = xs[i, j]
                for l in range(d):
                    hess_sum[j, l] += xij * xs[i, l]
        if _advance(theta, theta_sum, acc, gbuf, etas[i], <double> (k0 + i + 1),
                    sigma_sum, use_sigma, rs_sv, rs_sm, use_rs):
            return i
    return -1


def logreg_chunk(
    double[::1] theta,
    double[::1] theta_sum,
    double[::1] acc,
    double[:, ::1] xs,
    double[::1] ys,
    double[::1] etas,
    long long k0,
    double[:, ::1] extra,
    double[:, ::1] sigma_sum,
    double[:, ::1] hess_sum,
    double[::1] rs_sv,
    double[:, ::1] rs_sm,
    double[::1] gbuf,
):
    cdef Py_ssize_t m = xs.shape[0]
    cdef Py_ssize_t d = xs.shape[1]
    cdef bint use_extra = extra is not None
    cdef bint use_sigma = sigma_sum is not None
    cdef bint use_hess = hess_sum is not None
    cdef bint use_rs = rs_sv is not None
    cdef Py_ssize_t i, j, l
    cdef double z, w, ez, coef, hcoef, xij
    for i in range(m):
        z = 0.0
        for j in range(d):
            z += xs[i, j] * theta[j]
        z *= ys[i]
        # w = sigmoid(-z), computed without overflow in either tail
        if z >= 0.0:
            ez = exp(-z)
            w = ez / (1.0 + ez)
        else:
            w = 1.0 / (1.0 + exp(z))
        coef = -ys[i] * w
        for j in range(d):
            gbuf[j] = coef * xs[i, j]
        if use_extra:
            for j in range(d):
                gbuf[j] += extra[i, j]
        if use_hess:
            hcoef = w * (1.0 - w)
            for j in range(d):
                xij = hcoef * xs[i, j]
                for l in range(d):
                    hess_sum[j, l] += xij * xs[i, l]
        if _advance(theta, theta_sum, acc, gbuf, etas[i], <double> (k0 + i + 1),
                    sigma_sum, use_sigma, rs_sv, rs_sm, use_rs):
            return i
    return -1


def quadratic_chunk(
    double[::1] theta,
    double[::1] theta_sum,
    double[::1] acc,
    double[:, ::1] hmat,
    double[:, ::1] xis,
    double[::1] etas,
    long long k0,
    double[:, ::1] extra,
    double[:, ::1] sigma_sum,
    double[:, ::1] hess_sum,
    double[::1] rs_sv,
    double[:, ::1] rs_sm,
    double[::1] gbuf,
):
    cdef Py_ssize_t m = xis.shape[0]
    cdef Py_ssize_t d = xis.shape[1]
    cdef bint use_extra = extra is not None
    cdef bint use_sigma = sigma_sum is not None
    cdef bint use_hess = hess_sum is not None
    cdef bint use_rs = rs_sv is not None
    cdef Py_ssize_t i, j, l
    cdef double s
    for i in range(m):
        for j in range(d):
            s = 0.0
            for l in range(d):
                s += hmat[j, l] * theta[l]
            gbuf[j] = s + xis[i, j]
        if use_extra:
            for j in range(d):
                gbuf[j] += extra[i, j]
        if use_hess:
            for j in range(d):
                for l in range(d):
                    hess_sum[j, l] += hmat[j, l]
        if _advance(theta, theta_sum, acc, gbuf, etas[i], <double> (k0 + i + 1),
                    sigma_sum, use_sigma, rs_sv, rs_sm, use_rs):
            return i
    return -1
