"""Streaming sparse regression by soft-thresholded adaptive mirror descent.

Two modes share one state type:

* ``Mode.STREAMING`` keeps a dual accumulator ``theta`` and plays
  ``w_t = S_{lam_t}(theta_t) / (eps + eta (t-1))`` with ``lam_t = lam sqrt(t+1)``;
  the gradient step is ``theta_{t+1} = theta_t - (grad_t - eta w_t)``.
* ``Mode.AVERAGED`` weights step ``t`` by ``t``: denominator
  ``eps + eta t(t-1)/2``, ``lam_t = lam t^{3/2}``, and additionally keeps
  ``w_avg_t = (1 - 2/(t+1)) w_avg_{t-1} + 2/(t+1) w_t``.

The state is advanced eagerly: after consuming example ``t`` it holds
``theta_{t+1}``, ``w_{t+1}`` and (averaged mode) ``w_avg_{t+1}``, all of
which depend only on examples ``1..t``.  The prediction for example ``t`` is
always formed from ``w_t`` before its response is touched.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .core import Example, LossModel, WeightVector, as_array
from .errors import ConfigError, InvalidInputError, NumericalError

__all__ = [
    "Mode",
    "ScheduleKind",
    "Schedule",
    "SsrHyperparams",
    "SsrState",
    "TheoryMode",
    "ssr_init",
    "ssr_step",
    "ssr_avg_step",
    "lambda_schedule",
    "theory_lambda",
    "eta_from_alpha",
    "estimate_gradient_bound",
    "SsrLearner",
    "InvariantViolation",
]


class Mode(str, enum.Enum):
    STREAMING = "streaming"
    AVERAGED = "averaged"


class ScheduleKind(str, enum.Enum):
    SQRT_GROWTH = "sqrt"
    BATCH_GROWTH = "batch"
    FORCE_K = "force_k"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Schedule:
    kind: ScheduleKind = ScheduleKind.SQRT_GROWTH
    k: int | None = None
    B: float | None = None

    def __post_init__(self):
        kind = ScheduleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is ScheduleKind.FORCE_K:
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ConfigError("force_k schedule needs a positive integer k")
            if self.B is None or not self.B > 0:
                raise ConfigError("force_k schedule needs a positive margin B")
            object.__setattr__(self, "k", int(self.k))
            object.__setattr__(self, "B", float(self.B))

    @classmethod
    def sqrt(cls):
        return cls(ScheduleKind.SQRT_GROWTH)

    @classmethod
    def batch(cls):
        return cls(ScheduleKind.BATCH_GROWTH)

    @classmethod
    def constant(cls):
        return cls(ScheduleKind.CONSTANT)

    @classmethod
    def force_k(cls, k: int, B: float):
        return cls(ScheduleKind.FORCE_K, k, B)

    @classmethod
    def from_config(cls, obj) -> "Schedule":
        if isinstance(obj, Schedule):
            return obj
        if isinstance(obj, str):
            return cls(ScheduleKind(obj))
        if isinstance(obj, dict):
            unknown = set(obj) - {"kind", "k", "B"}
            if unknown:
                raise ConfigError(f"unknown schedule keys: {sorted(unknown)}")
            return cls(ScheduleKind(obj["kind"]), obj.get("k"), obj.get("B"))
        raise ConfigError(f"cannot build a schedule from {obj!r}")

    def to_config(self):
        if self.kind is ScheduleKind.FORCE_K:
            return {"kind": self.kind.value, "k": self.k, "B": self.B}
        return self.kind.value


def lambda_schedule(schedule: Schedule, lam: float, t: int, theta=None, prev: float | None = None) -> float:
    """l1 level at step ``t``.

    ``FORCE_K`` returns ``max(prev, |theta|_(k+1) + B)`` where ``|theta|_(k+1)``
    is the (k+1)-st largest magnitude; ``prev`` defaults to ``lam``.
    """
    kind = schedule.kind
    if kind is ScheduleKind.SQRT_GROWTH:
        return lam * math.sqrt(t + 1)
    if kind is ScheduleKind.BATCH_GROWTH:
        return lam * t ** 1.5
    if kind is ScheduleKind.CONSTANT:
        return lam
    if theta is None:
        raise InvalidInputError("force_k schedule needs the current theta")
    theta = np.asarray(theta)
    d = theta.shape[0]
    k = schedule.k
    if k >= d:
        raise InvalidInputError(f"force_k needs k < d (k={k}, d={d})")
    mags = np.abs(theta)
    kth = float(np.partition(mags, d - k - 1)[d - k - 1])
    base = lam if prev is None else prev
    return max(base, kth + schedule.B)


@dataclass(frozen=True)
class SsrHyperparams:
    """``eta`` quadratic pull, ``lam`` l1 scale, ``epsilon`` ridge seed.

    ``schedule=None`` picks the mode's default (sqrt growth when streaming,
    t^{3/2} growth when averaged).
    """

    eta: float = 0.0
    lam: float = 0.0
    epsilon: float = 1.0
    schedule: Schedule | None = None

    def __post_init__(self):
        for name in ("eta", "lam", "epsilon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and nonnegative, got {v}")
            object.__setattr__(self, name, float(v))
        if self.eta == 0 and self.epsilon == 0 and self.lam == 0:
            raise ConfigError("eta, epsilon and lambda are all zero: the update has no curvature")
        if self.schedule is not None:
            object.__setattr__(self, "schedule", Schedule.from_config(self.schedule))

    def schedule_for(self, mode: Mode) -> Schedule:
        if self.schedule is not None:
            return self.schedule
        return Schedule.batch() if Mode(mode) is Mode.AVERAGED else Schedule.sqrt()

    @classmethod
    def from_theory(cls, B, d, T, delta, alpha, mode=Mode.AVERAGED, rho=None):
        """Constants prescribed by the guarantees: eta = alpha/2, eps = 0, lam from :func:`theory_lambda`."""
        if Mode(mode) is Mode.AVERAGED:
            tm = TheoryMode.ESTIMATION if rho is None else TheoryMode.IRREPRESENTABLE
        else:
            tm = TheoryMode.PREDICTION
        return cls(eta=eta_from_alpha(alpha), lam=theory_lambda(tm, B, d, T, delta, rho), epsilon=0.0)


@dataclass(eq=False)
class SsrState:
    """Mutable learner state; arrays are owned and updated in place.

    Holds no per-step history: three length-``d`` vectors at most.
    """

    mode: Mode
    t: int
    theta: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    w_avg: np.ndarray | None = field(repr=False)
    lambda_t: float
    hp: SsrHyperparams
    schedule: Schedule
    poisoned: bool = False

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.w))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    def denominator(self, t: int | None = None) -> float:
        t = self.t if t is None else t
        hp = self.hp
        if self.mode is Mode.AVERAGED:
            return hp.epsilon + hp.eta * (t * (t - 1) / 2.0)
        return hp.epsilon + hp.eta * (t - 1)

    def weights(self) -> WeightVector:
        """Current iterate ``w_t``."""
        return WeightVector(self.w)

    def average(self) -> WeightVector:
        if self.w_avg is None:
            raise InvalidInputError("running average only exists in averaged mode")
        return WeightVector(self.w_avg)

    def estimate(self) -> WeightVector:
        """The mode's output: ``w_avg`` when averaged, else ``w``."""
        return WeightVector(self.w_avg if self.w_avg is not None else self.w)


def ssr_init(d: int, hp: SsrHyperparams, mode: Mode = Mode.STREAMING) -> SsrState:
    if int(d) != d or d < 1:
        raise InvalidInputError(f"dimension must be a positive integer, got {d}")
    mode = Mode(mode)
    schedule = hp.schedule_for(mode)
    if schedule.kind is ScheduleKind.FORCE_K and schedule.k >= d:
        raise InvalidInputError(f"force_k needs k < d (k={schedule.k}, d={d})")
    theta = np.zeros(d)
    lam1 = lambda_schedule(schedule, hp.lam, 1, theta=theta)
    return SsrState(
        mode=mode,
        t=1,
        theta=theta,
        w=np.zeros(d),
        w_avg=np.zeros(d) if mode is Mode.AVERAGED else None,
        lambda_t=lam1,
        hp=hp,
        schedule=schedule,
    )


def _advance(state: SsrState, e: Example, model: LossModel) -> float:
    if state.poisoned:
        raise NumericalError("learner state is poisoned by an earlier non-finite update")
    x = e.x
    if x.shape[0] != state.d:
        raise InvalidInputError(f"dimension mismatch: state {state.d}, example {x.shape[0]}")
    z = K.dot(state.w, x)
    g = model.derivative(z, e.y)
    if not (math.isfinite(z) and math.isfinite(g)):
        state.poisoned = True
        raise NumericalError(f"non-finite gradient at step {state.t}")

    hp = state.hp
    t = state.t
    t_next = t + 1
    scale = float(t) if state.mode is Mode.AVERAGED else 1.0
    den = state.denominator(t_next)
    c = 2.0 / (t_next + 1)
    sched = state.schedule
    if sched.kind is ScheduleKind.FORCE_K:
        K.dual_update(state.theta, state.w, x, g, scale, hp.eta, 0.0, 1.0, None, 0.0, False)
        lam = lambda_schedule(sched, hp.lam, t_next, theta=state.theta, prev=state.lambda_t)
        K.sparsify(state.theta, lam, den, state.w, state.w_avg, c)
    else:
        lam = lambda_schedule(sched, hp.lam, t_next)
        K.dual_update(state.theta, state.w, x, g, scale, hp.eta, lam, den, state.w_avg, c, True)
    state.t = t_next
    state.lambda_t = lam
    if den == 0.0 and state.nnz > 0:
        state.poisoned = True
        raise NumericalError(f"unbounded iterate at step {t_next}: zero curvature and |theta| > lambda")
    return z


def ssr_step(state: SsrState, e: Example, model: LossModel):
    """Predict example ``t`` from ``w_t``, then consume it.  Returns ``(prediction, state)``."""
    if state.mode is not Mode.STREAMING:
        raise InvalidInputError("ssr_step needs a streaming-mode state; use ssr_avg_step")
    z = _advance(state, e, model)
    return model.predict(z), state


def ssr_avg_step(state: SsrState, e: Example, model: LossModel):
    """Averaged-mode counterpart of :func:`ssr_step`."""
    if state.mode is not Mode.AVERAGED:
        raise InvalidInputError("ssr_avg_step needs an averaged-mode state")
    z = _advance(state, e, model)
    return model.predict(z), state


class TheoryMode(str, enum.Enum):
    PREDICTION = "prediction"  # streaming regret guarantee
    ESTIMATION = "estimation"  # averaged parameter-error guarantee
    SUPPORT = "support"  # sqrt-growth support recovery constant
    IRREPRESENTABLE = "irrepresentable"  # averaged, correlated noise features


def _clamped_log(arg: float) -> float:
    if arg < 1.0:
        warnings.warn(f"log argument {arg:.4g} < 1; clamping the log at 0", RuntimeWarning, stacklevel=3)
        return 0.0
    return math.log(arg)


def theory_lambda(mode, B: float, d: int, T: int, delta: float, rho: float | None = None) -> float:
    """Closed-form l1 scale from the high-probability guarantees.

    ========================  =========================================================
    ``PREDICTION``            (3B/2) sqrt(log(6 d log2(2T) / delta))
    ``ESTIMATION``            (3B/2) sqrt(log(6 d log2(2T^3) / delta))
    ``SUPPORT``               (3B/2) sqrt(log(2 d log2(2T) / delta))
    ``IRREPRESENTABLE``       sqrt(228 B^2 log(2 d log2(2T^3) / delta) / (1 - 24 rho^2))
    ========================  =========================================================
    """
    mode = TheoryMode(mode)
    if not B > 0:
        raise InvalidInputError(f"B must be positive, got {B}")
    if d < 1 or T < 1:
        raise InvalidInputError("d and T must be at least 1")
    if not 0 < delta < 1:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    if mode is TheoryMode.PREDICTION:
        return 1.5 * B * math.sqrt(_clamped_log(6 * d * math.log2(2 * T) / delta))
    if mode is TheoryMode.ESTIMATION:
        return 1.5 * B * math.sqrt(_clamped_log(6 * d * math.log2(2 * float(T) ** 3) / delta))
    if mode is TheoryMode.SUPPORT:
        return 1.5 * B * math.sqrt(_clamped_log(2 * d * math.log2(2 * T) / delta))
    rho = 0.0 if rho is None else float(rho)
    if not 0 <= rho < 1 / math.sqrt(24):
        raise InvalidInputError(f"rho must lie in [0, 1/sqrt(24)), got {rho}")
    log_term = _clamped_log(2 * d * math.log2(2 * float(T) ** 3) / delta)
    return math.sqrt(228 * B * B * log_term / (1 - 24 * rho * rho))


def eta_from_alpha(alpha: float) -> float:
    return alpha / 2.0


def estimate_gradient_bound(examples, model: LossModel, w=None) -> float:
    """Largest observed ``||grad f_t(w)||_inf`` over ``examples`` (``w`` defaults to 0)."""
    B = 0.0
    wa = None if w is None else as_array(w)
    for e in examples:
        z = 0.0 if wa is None else float(wa @ e.x)
        g = abs(model.derivative(z, e.y)) * float(np.max(np.abs(e.x)))
        B = max(B, g)
    return B


class InvariantViolation(AssertionError):
    pass


class SsrLearner:
    """Harness-facing wrapper: ``step`` returns the margin used for the prediction.

    With ``instrument=True`` every step re-checks that the support of ``w``
    is exactly ``{i : |theta_i| > lambda_t}`` (so ``w = 0`` whenever
    ``||theta||_inf <= lambda_t``).
    """

    def __init__(self, d, hp: SsrHyperparams, model: LossModel, mode=Mode.STREAMING, instrument=False):
        self.state = ssr_init(d, hp, mode)
        self.model = model
        self.instrument = instrument
        self.checks = 0
        self.zero_checks = 0

    @property
    def t(self):
        return self.state.t

    def step(self, e: Example) -> float:
        z = _advance(self.state, e, self.model)
        if self.instrument:
            self.verify()
        return z

    def verify(self):
        s = self.state
        active = np.abs(s.theta) > s.lambda_t
        if not np.array_equal(active, s.w != 0):
            raise InvariantViolation(f"support of w differs from {{|theta| > lambda}} at t={s.t}")
        if not active.any():
            self.zero_checks += 1
            if np.any(s.w != 0):
                raise InvariantViolation(f"w nonzero although ||theta||_inf <= lambda at t={s.t}")
        self.checks += 1

    def weights(self) -> WeightVector:
        return self.state.weights()

    def estimate(self) -> WeightVector:
        return self.state.estimate()
