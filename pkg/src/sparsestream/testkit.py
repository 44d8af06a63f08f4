"""Brute-force reference solvers used by the test-suite and benchmarks.

Nothing in the library imports this module.  The oracles are written from
the objectives directly and deliberately share no code with the learners
they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import WeightVector
from .errors import InvalidInputError, NumericalError

__all__ = ["ProxInstance", "prox_oracle", "prox_objective", "md_sgd_oracle", "lasso_pg_fit", "power_iteration"]


@dataclass
class ProxInstance:
    """Per-coordinate objective

        q(w) = (eps/2) w^2 + (eta/2) sum_s c_s (w - w_s)^2 + w g + lam |w|

    with ``c_s = 1`` (``weighting="uniform"``) or ``c_s = s`` (``"linear"``)
    over the history ``w_1 .. w_{t-1}``.
    """

    epsilon: float
    eta: float
    history: list = field(default_factory=list)
    g_sum: np.ndarray = None
    lambda_t: float = 0.0
    weighting: str = "uniform"

    def coefficients(self) -> np.ndarray:
        n = len(self.history)
        if self.weighting == "uniform":
            return np.ones(n)
        if self.weighting == "linear":
            return np.arange(1, n + 1, dtype=float)
        raise InvalidInputError(f"unknown history weighting {self.weighting!r}")


def _quadratic_parts(inst: ProxInstance):
    c = inst.coefficients()
    g = np.asarray(inst.g_sum, dtype=float)
    curv = inst.epsilon + inst.eta * c.sum()
    lin = g.copy()
    for cs, ws in zip(c, inst.history):
        lin -= inst.eta * cs * np.asarray(ws, dtype=float)
    return curv, lin


def prox_objective(inst: ProxInstance, w) -> float:
    """Full objective (constants included), for optimality spot checks."""
    w = np.asarray(w, dtype=float)
    c = inst.coefficients()
    val = 0.5 * inst.epsilon * float(w @ w) + float(w @ np.asarray(inst.g_sum)) + inst.lambda_t * float(np.abs(w).sum())
    for cs, ws in zip(c, inst.history):
        diff = w - np.asarray(ws, dtype=float)
        val += 0.5 * inst.eta * cs * float(diff @ diff)
    return val


def prox_oracle(inst: ProxInstance) -> np.ndarray:
    """Exact minimizer, one coordinate at a time, by comparing the three
    candidate points (stationary point of the negative branch, 0, stationary
    point of the positive branch)."""
    a, b = _quadratic_parts(inst)
    lam = inst.lambda_t
    out = np.zeros_like(b)
    for i, bi in enumerate(b):
        # q_i(w) = a/2 w^2 + bi w + lam |w|
        if a == 0.0:
            if lam > 0 and abs(bi) <= lam:
                continue
            raise NumericalError("prox objective is unbounded below (no curvature, |g| > lambda)")
        q = lambda w: 0.5 * a * w * w + bi * w + lam * abs(w)
        cands = [0.0]
        wp = -(bi + lam) / a
        if wp > 0:
            cands.append(wp)
        wn = -(bi - lam) / a
        if wn < 0:
            cands.append(wn)
        out[i] = min(cands, key=q)
    return out


def md_sgd_oracle(history, grads, eta: float) -> np.ndarray:
    """Stationary point of (eta/2) sum_s ||w - w_s||^2 + w . theta_t,
    i.e. mean(w_s) - theta_t / (eta (t-1)) with theta_t = sum of the gradients.
    """
    history = [np.asarray(h, dtype=float) for h in history]
    if len(history) == 0:
        raise InvalidInputError("mirror-descent argmin is undefined at t = 1")
    if len(grads) != len(history):
        raise InvalidInputError("need one gradient per history point")
    m = len(history)
    theta = np.sum(np.asarray(grads, dtype=float), axis=0)
    return np.mean(history, axis=0) - theta / (eta * m)


def power_iteration(A: np.ndarray, iters: int = 200, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        Av = A @ v
        nv = np.linalg.norm(Av)
        if nv == 0:
            return 0.0
        v = Av / nv
        lam = float(v @ (A @ v))
    return lam


def lasso_pg_fit(prob, steps: int = 20_000, step_size: float | None = None, tol: float = 0.0) -> WeightVector:
    """ISTA on (1/(2n))||y - Xw||^2 + lam ||w||_1.

    ``step_size`` defaults to ``1/L`` with ``L`` the power-iteration estimate
    of the top eigenvalue of ``X^T X / n`` (inflated by 1e-9 relative for
    safety).  Raises ``NumericalError`` if the objective increases for 10
    consecutive iterations.
    """
    X = np.asarray(prob.X, dtype=float)
    y = np.asarray(prob.y, dtype=float)
    n, d = X.shape
    L = power_iteration(X.T @ X / n) * (1 + 1e-9)
    if step_size is None:
        step_size = 1.0 / L if L > 0 else 1.0
    lam = prob.lam

    def obj(w):
        r = y - X @ w
        return float(r @ r) / (2 * n) + lam * float(np.abs(w).sum())

    w = np.zeros(d)
    prev = obj(w)
    rising = 0
    for _ in range(steps):
        grad = -(X.T @ (y - X @ w)) / n
        v = w - step_size * grad
        w_new = np.sign(v) * np.maximum(np.abs(v) - step_size * lam, 0.0)
        cur = obj(w_new)
        if not math.isfinite(cur):
            raise NumericalError("proximal gradient diverged")
        rising = rising + 1 if cur > prev else 0
        if rising >= 10:
            raise NumericalError("proximal gradient objective increased 10 steps in a row")
        moved = float(np.max(np.abs(w_new - w))) if d else 0.0
        w, prev = w_new, cur
        if moved <= tol:
            break
    return WeightVector(w)
