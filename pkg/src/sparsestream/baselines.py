"""Comparators: plain SGD, p-norm dual averaging with an l1 threshold, and a
coordinate-descent batch lasso used as an oracle.  Also the learner plugin
registry the harness resolves ``plugin:<name>`` algorithms through."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from . import kernels as K
from .core import Example, LossModel, WeightVector, as_array
from .errors import ConfigError, InvalidInputError, NumericalError

__all__ = [
    "SgdState",
    "sgd_init",
    "sgd_step",
    "PnormState",
    "pnorm_init",
    "pnorm_rda_step",
    "default_p",
    "LassoProblem",
    "LassoFit",
    "lasso_cd_fit",
    "lasso_kkt_residual",
    "Learner",
    "SgdLearner",
    "PnormLearner",
    "LassoOracleLearner",
    "register_learner",
    "get_learner_factory",
    "registered_learners",
]


# -- SGD ---------------------------------------------------------------------


@dataclass(eq=False)
class SgdState:
    t: int
    w: np.ndarray = field(repr=False)
    eta: float

    def weights(self) -> WeightVector:
        return WeightVector(self.w)


def sgd_init(d: int, eta: float) -> SgdState:
    if not (eta > 0 and math.isfinite(eta)):
        raise ConfigError(f"SGD needs a positive finite eta, got {eta}")
    if d < 1:
        raise InvalidInputError("dimension must be positive")
    return SgdState(t=1, w=np.zeros(d), eta=float(eta))


def _sgd_advance(state: SgdState, e: Example, model: LossModel) -> float:
    if e.x.shape[0] != state.w.shape[0]:
        raise InvalidInputError("dimension mismatch")
    z = K.dot(state.w, e.x)
    g = model.derivative(z, e.y)
    if not (math.isfinite(z) and math.isfinite(g)):
        raise NumericalError(f"non-finite SGD gradient at step {state.t}")
    K.axpy(state.w, e.x, -g / (state.eta * state.t))
    state.t += 1
    return z


def sgd_step(state: SgdState, e: Example, model: LossModel):
    """``w_{t+1} = w_t - grad_t / (eta t)``; returns ``(prediction from w_t, state)``."""
    z = _sgd_advance(state, e, model)
    return model.predict(z), state


# -- p-norm dual averaging -------------------------------------------------------


def default_p(d: int) -> float:
    """p = 2 ln d / (2 ln d - 1), i.e. dual exponent q = 2 ln d."""
    if d < 2:
        raise InvalidInputError("the default p-norm exponent needs d >= 2")
    q = 2.0 * math.log(d)
    return q / (q - 1.0)


@dataclass(eq=False)
class PnormState:
    t: int
    theta: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    lam: float
    step_scale: float
    p: float

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def weights(self) -> WeightVector:
        return WeightVector(self.w)


def pnorm_init(d: int, lam: float = 0.0, step_scale: float = 1.0, p: float | None = None, q: float | None = None) -> PnormState:
    if p is not None and q is not None:
        raise ConfigError("give p or q, not both")
    if q is not None:
        if not q > 1:
            raise ConfigError(f"q must exceed 1, got {q}")
        p = q / (q - 1.0)
    elif p is None:
        p = default_p(d)
    if not p > 1:
        raise ConfigError(f"p must exceed 1, got {p}")
    if not step_scale > 0:
        raise ConfigError("step_scale must be positive")
    if not lam >= 0:
        raise ConfigError("lambda must be nonnegative")
    return PnormState(t=1, theta=np.zeros(d), w=np.zeros(d), lam=float(lam), step_scale=float(step_scale), p=float(p))


def _qnorm_link(u: np.ndarray, q: float) -> np.ndarray:
    """sign(u) |u|^{q-1} ||u||_q^{2-q}, evaluated on u / max|u| to stay in range."""
    m = float(np.max(np.abs(u))) if u.size else 0.0
    if m == 0.0:
        return np.zeros_like(u)
    v = np.abs(u) / m
    nq = float(np.sum(v ** q)) ** (1.0 / q)
    return m * np.sign(u) * v ** (q - 1.0) * nq ** (2.0 - q)


def _pnorm_advance(state: PnormState, e: Example, model: LossModel) -> float:
    if e.x.shape[0] != state.w.shape[0]:
        raise InvalidInputError("dimension mismatch")
    z = K.dot(state.w, e.x)
    g = model.derivative(z, e.y)
    if not (math.isfinite(z) and math.isfinite(g)):
        raise NumericalError(f"non-finite p-norm gradient at step {state.t}")
    K.axpy(state.theta, e.x, g)
    t = state.t
    thr = state.lam * t
    u = np.sign(state.theta) * np.maximum(np.abs(state.theta) - thr, 0.0)
    state.w[:] = -(state.step_scale / math.sqrt(t)) * _qnorm_link(u, state.q)
    state.t = t + 1
    return z


def pnorm_rda_step(state: PnormState, e: Example, model: LossModel):
    """Accumulate the gradient, soft-threshold the sum at ``lam t`` and map it
    through the q-norm link with step ``step_scale / sqrt(t)``."""
    z = _pnorm_advance(state, e, model)
    return model.predict(z), state


# -- batch lasso -------------------------------------------------------------------


@dataclass(eq=False)
class LassoProblem:
    """Minimize (1/(2n)) ||y - X w||^2 + lam ||w||_1."""

    X: np.ndarray
    y: np.ndarray
    lam: float

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise InvalidInputError(f"inconsistent lasso shapes X{self.X.shape}, y{self.y.shape}")
        if self.X.shape[0] < 1 or self.X.shape[1] < 1:
            raise InvalidInputError("lasso needs n >= 1 and d >= 1")
        if not self.lam >= 0:
            raise InvalidInputError("lasso penalty must be nonnegative")
        self.lam = float(self.lam)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def objective(self, w) -> float:
        w = as_array(w)
        r = self.y - self.X @ w
        return float(r @ r) / (2 * self.n) + self.lam * float(np.abs(w).sum())

    def smooth_gradient(self, w) -> np.ndarray:
        w = as_array(w)
        return -(self.X.T @ (self.y - self.X @ w)) / self.n

    def lam_max(self) -> float:
        return float(np.max(np.abs(self.X.T @ self.y))) / self.n


@dataclass(eq=False)
class LassoFit:
    w: WeightVector
    converged: bool
    sweeps: int
    objectives: list = field(repr=False)

    @property
    def objective(self) -> float:
        return self.objectives[-1]


def lasso_cd_fit(prob: LassoProblem, tol: float = 1e-12, max_sweeps: int = 10_000, w0=None) -> LassoFit:
    """Cyclic coordinate descent until the largest coordinate move is below ``tol``.

    ``objectives[0]`` is the objective at the start point and one entry is
    appended per sweep.  Hitting ``max_sweeps`` returns the last iterate with
    ``converged=False``.
    """
    X = np.asfortranarray(prob.X)
    n = float(prob.n)
    w = np.zeros(prob.d) if w0 is None else np.array(as_array(w0), dtype=np.float64)
    resid = prob.y - X @ w
    col_sq = np.einsum("ij,ij->j", X, X) / n
    lam = prob.lam
    l1 = lambda: lam * float(np.abs(w).sum())
    objectives = [float(resid @ resid) / (2 * n) + l1()]
    converged = False
    sweeps = 0
    while sweeps < max_sweeps:
        delta = K.lasso_cd_sweep(X, resid, w, col_sq, lam, n)
        sweeps += 1
        objectives.append(float(resid @ resid) / (2 * n) + l1())
        if delta < tol:
            converged = True
            break
    return LassoFit(WeightVector(w), converged, sweeps, objectives)


def lasso_kkt_residual(prob: LassoProblem, w) -> float:
    """Largest violation of the lasso optimality conditions at ``w``."""
    w = as_array(w)
    g = prob.smooth_gradient(w)
    lam = prob.lam
    zero = w == 0
    viol = np.where(zero, np.maximum(np.abs(g) - lam, 0.0), np.abs(g + lam * np.sign(w)))
    return float(viol.max()) if viol.size else 0.0


# -- harness-facing learners ---------------------------------------------------------------


@runtime_checkable
class Learner(Protocol):
    """What the harness drives: ``step`` consumes one example and returns the
    margin ``w_t @ x_t`` it predicted with; ``weights`` is the current iterate.

    Optional hooks: ``estimate()`` (reported estimate, defaults to
    ``weights()``) and ``checkpoint()`` (called before each recorded row).
    """

    def step(self, e: Example) -> float: ...

    def weights(self) -> WeightVector: ...


class SgdLearner:
    def __init__(self, d, model: LossModel, eta: float):
        self.state = sgd_init(d, eta)
        self.model = model

    def step(self, e):
        return _sgd_advance(self.state, e, self.model)

    def weights(self):
        return self.state.weights()


class PnormLearner:
    def __init__(self, d, model: LossModel, lam=0.0, step_scale=1.0, p=None, q=None):
        self.state = pnorm_init(d, lam, step_scale, p, q)
        self.model = model

    def step(self, e):
        return _pnorm_advance(self.state, e, self.model)

    def weights(self):
        return self.state.weights()


class LassoOracleLearner:
    """Batch lasso on the first ``cap`` examples, refit at each checkpoint.

    Predictions between checkpoints use the latest fit, so every prediction
    depends only on examples already consumed.
    """

    def __init__(self, d, model: LossModel, lam: float, cap: int = 2500, tol: float = 1e-8, max_sweeps: int = 1000):
        if cap < 1:
            raise ConfigError("lasso oracle cap must be positive")
        self.model = model
        self.lam = float(lam)
        self.cap = int(cap)
        self.tol = tol
        self.max_sweeps = max_sweeps
        self._X = np.empty((0, d))
        self._y = np.empty(0)
        self._n = 0
        self._fitted_n = 0
        self.w = np.zeros(d)
        self.last_fit: LassoFit | None = None

    def step(self, e):
        z = K.dot(self.w, e.x)
        if self._n < self.cap:
            if self._n == self._X.shape[0]:
                grow = min(self.cap, max(64, 2 * self._n))
                X = np.empty((grow, self.w.shape[0]))
                y = np.empty(grow)
                X[: self._n] = self._X[: self._n]
                y[: self._n] = self._y[: self._n]
                self._X, self._y = X, y
            self._X[self._n] = e.x
            self._y[self._n] = e.y
            self._n += 1
        return z

    def checkpoint(self):
        if self._n == self._fitted_n:
            return
        prob = LassoProblem(self._X[: self._n], self._y[: self._n], self.lam)
        self.last_fit = lasso_cd_fit(prob, tol=self.tol, max_sweeps=self.max_sweeps, w0=self.w)
        self.w = np.array(self.last_fit.w.values)
        self._fitted_n = self._n

    def weights(self):
        return WeightVector(self.w)


LearnerFactory = Callable[[int, dict, LossModel], Learner]
_REGISTRY: dict[str, LearnerFactory] = {}


def register_learner(name: str, factory: LearnerFactory) -> None:
    """Make ``factory(d, hp, model)`` available to the harness as ``plugin:<name>``."""
    if not name or ":" in name:
        raise ConfigError(f"invalid plugin name {name!r}")
    _REGISTRY[name] = factory


def get_learner_factory(name: str) -> LearnerFactory:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(f"no learner registered as {name!r}; known: {sorted(_REGISTRY)}") from None


def registered_learners():
    return sorted(_REGISTRY)
