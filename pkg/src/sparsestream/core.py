"""Shared numeric primitives: examples, weight vectors, soft-thresholding, losses.

Every loss handled here is a function of the margin ``z = w @ x`` and the
response ``y``, so the gradient with respect to ``w`` is always a scalar
derivative times ``x``.  The learners exploit that to keep the per-step work
at two passes over ``d``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "Example",
    "LossKind",
    "LossModel",
    "WeightVector",
    "as_array",
    "soft_threshold",
    "sigmoid",
    "loss_value",
    "loss_gradient",
    "SQUARED",
    "LOGISTIC",
]


@dataclass(frozen=True)
class Example:
    """One stream element: dense features ``x`` and response ``y``."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise InvalidInputError(f"features must be a 1-d vector, got shape {x.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))

    @property
    def d(self) -> int:
        return self.x.shape[0]

    def validate(self, logistic: bool = False) -> "Example":
        """Full finiteness check; O(d), so generators skip it."""
        if not np.all(np.isfinite(self.x)):
            raise InvalidInputError("features contain non-finite values")
        if not math.isfinite(self.y):
            raise InvalidInputError("response is not finite")
        if logistic and self.y not in (0.0, 1.0):
            raise InvalidInputError(f"logistic response must be 0 or 1, got {self.y}")
        return self


class LossKind(str, enum.Enum):
    SQUARED = "squared"
    HUBER = "huber"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class LossModel:
    """Squared, Huberized (clip ``huber_clip``) or logistic loss.

    ``value(z, y)`` and ``derivative(z, y)`` are in terms of the margin
    ``z = w @ x``; ``derivative`` is d loss / dz.
    """

    kind: LossKind = LossKind.SQUARED
    huber_clip: float | None = None

    def __post_init__(self):
        kind = LossKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is LossKind.HUBER:
            if self.huber_clip is None or not self.huber_clip > 0:
                raise InvalidInputError("Huber loss needs a positive huber_clip")
            object.__setattr__(self, "huber_clip", float(self.huber_clip))
        elif self.huber_clip is not None:
            raise InvalidInputError("huber_clip only applies to the Huber loss")

    @classmethod
    def huber(cls, clip: float) -> "LossModel":
        return cls(LossKind.HUBER, clip)

    @property
    def is_logistic(self) -> bool:
        return self.kind is LossKind.LOGISTIC

    def value(self, z: float, y: float) -> float:
        if self.kind is LossKind.SQUARED:
            r = y - z
            return 0.5 * r * r
        if self.kind is LossKind.HUBER:
            r = abs(y - z)
            c = self.huber_clip
            return 0.5 * r * r if r < c else c * (r - 0.5 * c)
        # max(z, 0) + log1p(exp(-|z|)) - y z  ==  log(1 + e^z) - y z
        return max(z, 0.0) + math.log1p(math.exp(-abs(z))) - y * z

    def derivative(self, z: float, y: float) -> float:
        if self.kind is LossKind.SQUARED:
            return z - y
        if self.kind is LossKind.HUBER:
            c = self.huber_clip
            return min(max(z - y, -c), c)
        return _sigmoid_scalar(z) - y

    def predict(self, z: float) -> float:
        """Prediction issued for margin ``z``: raw for regression, probability for logistic."""
        return _sigmoid_scalar(z) if self.kind is LossKind.LOGISTIC else z

    def to_dict(self) -> dict:
        if self.kind is LossKind.HUBER:
            return {"kind": self.kind.value, "huber_clip": self.huber_clip}
        return {"kind": self.kind.value}

    @classmethod
    def from_config(cls, obj) -> "LossModel":
        if isinstance(obj, LossModel):
            return obj
        if isinstance(obj, str):
            return cls(LossKind(obj))
        if isinstance(obj, dict):
            unknown = set(obj) - {"kind", "huber_clip"}
            if unknown:
                raise InvalidInputError(f"unknown loss keys: {sorted(unknown)}")
            return cls(LossKind(obj["kind"]), obj.get("huber_clip"))
        raise InvalidInputError(f"cannot build a loss model from {obj!r}")


SQUARED = LossModel(LossKind.SQUARED)
LOGISTIC = LossModel(LossKind.LOGISTIC)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Immutable dense weights with the nonzero index set derived on demand."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1:
            raise InvalidInputError(f"weights must be a 1-d vector, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, d: int) -> "WeightVector":
        return cls(np.zeros(d))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @cached_property
    def support(self) -> np.ndarray:
        """Sorted indices i with values[i] != 0."""
        idx = np.flatnonzero(self.values)
        idx.setflags(write=False)
        return idx

    @property
    def nnz(self) -> int:
        return int(self.support.size)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.d

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"WeightVector(d={self.d}, nnz={self.nnz})"


def as_array(w) -> np.ndarray:
    if isinstance(w, WeightVector):
        return w.values
    return np.asarray(w, dtype=np.float64)


def soft_threshold(v, lam: float) -> np.ndarray:
    """Shrink each entry toward zero by ``lam``; entries with ``|v_i| <= lam`` become 0."""
    v = np.asarray(v, dtype=np.float64)
    if not (lam >= 0 and math.isfinite(lam)):
        raise InvalidInputError(f"threshold must be finite and nonnegative, got {lam}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("soft_threshold input contains non-finite values")
    return np.sign(v) * np.maximum(np.abs(v) - lam, 0.0)


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def _margin(w, e: Example) -> float:
    w = as_array(w)
    if w.shape != e.x.shape:
        raise InvalidInputError(f"dimension mismatch: weights {w.shape[0]}, features {e.x.shape[0]}")
    return float(w @ e.x)


def loss_value(model: LossModel, w, e: Example) -> float:
    return model.value(_margin(w, e), e.y)


def loss_gradient(model: LossModel, w, e: Example) -> np.ndarray:
    """Exact gradient of :func:`loss_value` with respect to ``w``."""
    return model.derivative(_margin(w, e), e.y) * e.x
