# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-step kernels; see ``_kernels_py`` for the reference versions."""

from libc.math cimport copysign, fabs, INFINITY

NAME = "cython"


cpdef double dot(const double[::1] w, const double[::1] x):
    # four partial sums break the serial add chain
    cdef Py_ssize_t i, n = w.shape[0], m = n - n % 4
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    for i in range(0, m, 4):
        s0 += w[i] * x[i]
        s1 += w[i + 1] * x[i + 1]
        s2 += w[i + 2] * x[i + 2]
        s3 += w[i + 3] * x[i + 3]
    for i in range(m, n):
        s0 += w[i] * x[i]
    return (s0 + s1) + (s2 + s3)


cdef inline double _shrink_inf(double th, double lam) noexcept nogil:
    # zero curvature: anything past the threshold is unbounded
    if th > lam:
        return INFINITY
    if th < -lam:
        return -INFINITY
    return 0.0


cdef inline double _shrink(double th, double lam, double inv) noexcept nogil:
    cdef double a = fabs(th) - lam
    return copysign(a if a > 0.0 else 0.0, th) * inv


cdef void _refresh(const double[::1] theta, double lam, double den, double[::1] w) noexcept nogil:
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double inv
    if den == 0.0:
        for i in range(n):
            w[i] = _shrink_inf(theta[i], lam)
        return
    inv = 1.0 / den
    for i in range(n):
        w[i] = _shrink(theta[i], lam, inv)


cdef void _blend(double[::1] avg, const double[::1] w, double c) noexcept nogil:
    cdef Py_ssize_t i, n = w.shape[0]
    cdef double keep = 1.0 - c
    for i in range(n):
        avg[i] = keep * avg[i] + c * w[i]


def dual_update(double[::1] theta, double[::1] w, const double[::1] x,
                double g, double scale, double eta, double lam, double den,
                w_avg, double c, bint shrink):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double th, wn, inv, keep = 1.0 - c
    cdef double[::1] avg
    if not shrink:
        with nogil:
            for i in range(n):
                theta[i] = theta[i] - scale * (g * x[i] - eta * w[i])
        return
    if den == 0.0:
        with nogil:
            for i in range(n):
                theta[i] = theta[i] - scale * (g * x[i] - eta * w[i])
            _refresh(theta, lam, den, w)
        if w_avg is not None:
            avg = w_avg
            with nogil:
                _blend(avg, w, c)
        return
    # one fused pass: dual step, threshold and (averaged mode) blend
    inv = 1.0 / den
    if w_avg is None:
        with nogil:
            for i in range(n):
                th = theta[i] - scale * (g * x[i] - eta * w[i])
                theta[i] = th
                w[i] = _shrink(th, lam, inv)
    else:
        avg = w_avg
        with nogil:
            for i in range(n):
                th = theta[i] - scale * (g * x[i] - eta * w[i])
                theta[i] = th
                wn = _shrink(th, lam, inv)
                w[i] = wn
                avg[i] = keep * avg[i] + c * wn


def sparsify(const double[::1] theta, double lam, double den, double[::1] w,
             w_avg, double c):
    cdef double[::1] avg
    with nogil:
        _refresh(theta, lam, den, w)
    if w_avg is not None:
        avg = w_avg
        with nogil:
            _blend(avg, w, c)


def axpy(double[::1] w, const double[::1] x, double a):
    cdef Py_ssize_t i, n = w.shape[0]
    with nogil:
        for i in range(n):
            w[i] = w[i] + a * x[i]


def lasso_cd_sweep(const double[::1, :] X, double[::1] resid, double[::1] w,
                   const double[::1] col_sq, double lam, double n):
    cdef Py_ssize_t i, j, m = X.shape[0], d = X.shape[1]
    cdef double cj, old, new, rho, delta, max_delta = 0.0
    with nogil:
        for j in range(d):
            cj = col_sq[j]
            if cj == 0.0:
                w[j] = 0.0
                continue
            old = w[j]
            rho = 0.0
            for i in range(m):
                rho += X[i, j] * resid[i]
            rho = rho / n + cj * old
            if rho > lam:
                new = (rho - lam) / cj
            elif rho < -lam:
                new = (rho + lam) / cj
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                for i in range(m):
                    resid[i] -= delta * X[i, j]
                w[j] = new
                if fabs(delta) > max_delta:
                    max_delta = fabs(delta)
    return max_delta
