"""Pure numpy implementations of the per-step kernels.

Signatures and arithmetic order mirror ``_ckernels.pyx`` so both backends
produce the same numbers up to rounding.
"""

import numpy as np

NAME = "python"


def dot(w, x):
    return float(np.dot(w, x))


def _shrink(theta, lam, den, w):
    np.abs(theta, out=w)
    w -= lam
    np.maximum(w, 0.0, out=w)
    if den == 0.0:
        # zero curvature: anything past the threshold is unbounded
        w[w > 0] = np.inf
    else:
        w *= 1.0 / den
    w *= np.sign(theta)


def dual_update(theta, w, x, g, scale, eta, lam, den, w_avg, c, shrink):
    """theta -= scale * (g * x - eta * w); then optionally refresh w (and w_avg)."""
    step = g * x
    step -= eta * w
    step *= scale
    theta -= step
    if shrink:
        sparsify(theta, lam, den, w, w_avg, c)


def sparsify(theta, lam, den, w, w_avg, c):
    """w = S_lam(theta) / den; w_avg = (1 - c) w_avg + c w when given."""
    _shrink(theta, lam, den, w)
    if w_avg is not None:
        w_avg *= 1.0 - c
        w_avg += c * w


def axpy(w, x, a):
    """w += a * x in place."""
    w += a * x


def lasso_cd_sweep(X, resid, w, col_sq, lam, n):
    """One cyclic coordinate-descent sweep for (1/2n)||y - Xw||^2 + lam ||w||_1.

    ``resid`` holds y - Xw and is kept in sync.  Returns the largest
    absolute coordinate change.
    """
    max_delta = 0.0
    for j in range(w.shape[0]):
        cj = col_sq[j]
        if cj == 0.0:
            if w[j] != 0.0:
                w[j] = 0.0
            continue
        col = X[:, j]
        old = w[j]
        rho = float(np.dot(col, resid)) / n + cj * old
        if rho > lam:
            new = (rho - lam) / cj
        elif rho < -lam:
            new = (rho + lam) / cj
        else:
            new = 0.0
        delta = new - old
        if delta != 0.0:
            resid -= delta * col
            w[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
    return max_delta
