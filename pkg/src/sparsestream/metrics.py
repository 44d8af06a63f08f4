"""Online measurement: regret, sliding-window loss, parameter error, support stats."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import WeightVector, as_array
from .errors import InvalidInputError

__all__ = [
    "RunRecord",
    "RESULT_COLUMNS",
    "regret_update",
    "WindowLoss",
    "window_loss",
    "param_error",
    "support_metrics",
]


@dataclass
class RunRecord:
    t: int
    inst_loss: float
    window_loss: float
    param_err: float | None
    avg_param_err: float | None
    regret: float | None
    support_size: int
    support_precision: float | None
    support_recall: float | None
    elapsed_ns: int

    def as_dict(self):
        return asdict(self)


RESULT_COLUMNS = ["run_id", "seed", "algo"] + [f.name for f in fields(RunRecord)]


def regret_update(acc: float, loss_learner: float, loss_comparator: float) -> float:
    return acc + (loss_learner - loss_comparator)


def window_loss(buffer) -> float:
    """Mean of the buffered losses; NaN for an empty buffer.

    Summed as offsets from the first entry with ``math.fsum`` so a constant
    stream reproduces its constant exactly.
    """
    n = len(buffer)
    if n == 0:
        return math.nan
    first = buffer[0]
    return first + math.fsum(v - first for v in buffer) / n


class WindowLoss:
    """Fixed-size buffer of the most recent losses."""

    def __init__(self, size: int = 1000):
        if size < 1:
            raise InvalidInputError("window size must be at least 1")
        self.buffer = deque(maxlen=size)

    def push(self, loss: float):
        self.buffer.append(loss)

    def value(self) -> float:
        return window_loss(self.buffer)

    def __len__(self):
        return len(self.buffer)


def param_error(w, wstar) -> float:
    a, b = as_array(w), as_array(wstar)
    if a.shape != b.shape:
        raise InvalidInputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    diff = a - b
    return float(diff @ diff)


def support_metrics(w, S):
    """(size, precision, recall) of supp(w) against the index set ``S``.

    Precision is 1 for an empty support (vacuous containment).
    """
    supp = w.support if isinstance(w, WeightVector) else np.flatnonzero(as_array(w))
    S = np.unique(np.asarray(S, dtype=np.intp))
    size = int(supp.size)
    hit = int(np.intersect1d(supp, S, assume_unique=True).size)
    precision = 1.0 if size == 0 else hit / size
    recall = hit / S.size if S.size else 1.0
    return size, precision, recall
