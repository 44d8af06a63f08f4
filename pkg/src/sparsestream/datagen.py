"""Synthetic streams, preprocessing, design diagnostics and file ingestion.

Randomness
----------
All draws come from counter-based Philox generators keyed off the stream seed
with :class:`numpy.random.SeedSequence` spawn keys:

* ``(0,)``                     true weights ``w*``
* ``(1, stream, 0)``           features of data stream ``stream``
* ``(1, stream, 1)``           noise / labels of data stream ``stream``

Stream ``0`` is the development stream; evaluation run seed ``s`` maps to
stream ``s + 1``.  The substreams never overlap, so ``w*`` is shared across
realizations while the data differ.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .core import Example, LossKind, LossModel, WeightVector, sigmoid
from .errors import ConfigError, DataError, InvalidInputError

__all__ = [
    "Design",
    "Placement",
    "StreamSpec",
    "TrueModel",
    "ExampleStream",
    "DEV_STREAM",
    "eval_stream_index",
    "substream",
    "make_wstar",
    "make_stream",
    "next_example",
    "RunningStandardizer",
    "standardize_clip_step",
    "Covariance",
    "DenseCov",
    "IdentityCov",
    "EquicorrelatedCov",
    "Ar1Cov",
    "as_covariance",
    "design_covariance",
    "IrrepResult",
    "irrep_rho",
    "classic_irrep",
    "empirical_alpha",
    "diagnostics",
    "ingest_stream",
    "write_dense_csv",
    "shuffled",
]

DEV_STREAM = 0


def eval_stream_index(seed: int) -> int:
    return int(seed) + 1


class Design(str, enum.Enum):
    IID_GAUSSIAN = "iid_gaussian"
    AR1 = "ar1"
    RANDOM_SIGN = "random_sign"


class Placement(str, enum.Enum):
    RANDOM = "random"
    CONSECUTIVE = "consecutive"


_SPEC_KEYS = {"d", "k", "design", "noise_sigma", "wstar_sd", "support_placement", "seed", "loss_kind"}


@dataclass(frozen=True)
class StreamSpec:
    d: int
    k: int
    design: Design = Design.IID_GAUSSIAN
    rho_corr: float | None = None
    noise_sigma: float = 1.0
    wstar_sd: float = 0.2
    support_placement: Placement = Placement.CONSECUTIVE
    seed: int = 0
    loss_kind: LossModel = field(default_factory=LossModel)

    def __post_init__(self):
        design = Design(self.design)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "support_placement", Placement(self.support_placement))
        object.__setattr__(self, "loss_kind", LossModel.from_config(self.loss_kind))
        if int(self.d) != self.d or self.d < 1:
            raise InvalidInputError(f"d must be a positive integer, got {self.d}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")
        if self.k > self.d:
            raise InvalidInputError(f"k={self.k} exceeds d={self.d}")
        if design is Design.AR1:
            rho = 0.8 if self.rho_corr is None else self.rho_corr
            if not 0 < rho < 1:
                raise InvalidInputError(f"rho_corr must lie in (0, 1), got {rho}")
            object.__setattr__(self, "rho_corr", float(rho))
        elif self.rho_corr is not None:
            raise InvalidInputError("rho_corr only applies to the ar1 design")
        if design is Design.RANDOM_SIGN and not self.loss_kind.is_logistic:
            raise InvalidInputError("the random_sign design is a logistic design")
        if not self.noise_sigma >= 0:
            raise InvalidInputError("noise_sigma must be nonnegative")
        if not self.wstar_sd > 0:
            raise InvalidInputError("wstar_sd must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")

    @property
    def model(self) -> LossModel:
        return self.loss_kind

    @classmethod
    def from_config(cls, obj: dict) -> "StreamSpec":
        if not isinstance(obj, dict):
            raise ConfigError("stream spec must be a JSON object")
        unknown = set(obj) - _SPEC_KEYS
        if unknown:
            raise ConfigError(f"unknown stream spec keys: {sorted(unknown)}")
        if "d" not in obj or "k" not in obj:
            raise ConfigError("stream spec needs d and k")
        kw = dict(obj)
        design = kw.pop("design", "iid_gaussian")
        if isinstance(design, dict):
            extra = set(design) - {"kind", "rho_corr"}
            if extra:
                raise ConfigError(f"unknown design keys: {sorted(extra)}")
            kw["rho_corr"] = design.get("rho_corr")
            design = design["kind"]
        try:
            return cls(design=design, **kw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_config(self) -> dict:
        design = self.design.value
        if self.design is Design.AR1:
            design = {"kind": design, "rho_corr": self.rho_corr}
        return {
            "d": self.d,
            "k": self.k,
            "design": design,
            "noise_sigma": self.noise_sigma,
            "wstar_sd": self.wstar_sd,
            "support_placement": self.support_placement.value,
            "seed": int(self.seed),
            "loss_kind": self.loss_kind.to_dict(),
        }


@dataclass(frozen=True)
class TrueModel:
    wstar: WeightVector
    support: np.ndarray

    @property
    def R(self) -> float:
        """l1 norm of the true weights."""
        return float(np.abs(self.wstar.values).sum())

    @property
    def k(self) -> int:
        return int(self.support.size)


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def make_wstar(spec: StreamSpec) -> TrueModel:
    rng = substream(spec.seed, 0)
    if spec.support_placement is Placement.CONSECUTIVE:
        support = np.arange(spec.k)
    else:
        support = np.sort(rng.choice(spec.d, size=spec.k, replace=False))
    vals = rng.normal(0.0, spec.wstar_sd, size=spec.k)
    # a drawn exact zero would shrink the support
    vals[vals == 0.0] = spec.wstar_sd
    w = np.zeros(spec.d)
    w[support] = vals
    support = support.astype(np.intp)
    support.setflags(write=False)
    return TrueModel(WeightVector(w), support)


class ExampleStream:
    """Infinite iterator over examples of one data stream, generated in chunks.

    The chunk size is fixed per stream, so a given ``(spec, stream)`` always
    yields the same sequence.
    """

    def __init__(self, spec: StreamSpec, model: TrueModel, stream: int, chunk: int = 256):
        self.spec = spec
        self.model = model
        self.stream = int(stream)
        self.chunk = int(chunk)
        self._rng_x = substream(spec.seed, 1, self.stream, 0)
        self._rng_y = substream(spec.seed, 1, self.stream, 1)
        self._S = np.asarray(model.support)
        self._wS = model.wstar.values[self._S]
        self._X = None
        self._y = None
        self._pos = 0
        self.count = 0

    def _refill(self):
        spec = self.spec
        n, d = self.chunk, spec.d
        if spec.design is Design.RANDOM_SIGN:
            X = self._rng_x.integers(0, 2, size=(n, d)).astype(np.float64)
            X *= 2.0
            X -= 1.0
        else:
            X = self._rng_x.standard_normal((n, d))
            if spec.design is Design.AR1:
                rho = spec.rho_corr
                X[:, 1:] *= math.sqrt(1.0 - rho * rho)
                X = lfilter([1.0], [1.0, -rho], X, axis=1)
        margin = X[:, self._S] @ self._wS
        if spec.loss_kind.is_logistic:
            y = (self._rng_y.random(n) < sigmoid(margin)).astype(np.float64)
        else:
            y = margin + spec.noise_sigma * self._rng_y.standard_normal(n)
        self._X = np.ascontiguousarray(X)
        self._y = y
        self._pos = 0

    def __iter__(self):
        return self

    def __next__(self) -> Example:
        if self._X is None or self._pos == self.chunk:
            self._refill()
        i = self._pos
        self._pos += 1
        self.count += 1
        return Example(self._X[i], self._y[i])

    def take(self, n: int) -> list:
        return [next(self) for _ in range(n)]


def make_stream(spec: StreamSpec, stream: int, model: TrueModel | None = None) -> ExampleStream:
    return ExampleStream(spec, model if model is not None else make_wstar(spec), stream)


def next_example(spec: StreamSpec, model: TrueModel, gen: ExampleStream) -> Example:
    if gen.spec is not spec and gen.spec != spec:
        raise InvalidInputError("generator was built for a different spec")
    return next(gen)


class RunningStandardizer:
    """One-pass per-coordinate centering/scaling (Welford) with clipping.

    Each example is transformed with the statistics of the examples before
    it; the statistics are updated afterwards.  Coordinates with zero
    spread map to 0.
    """

    def __init__(self, d: int, clip: float):
        if not clip > 0:
            raise InvalidInputError("clip must be positive")
        self.clip = float(clip)
        self.n = 0
        self.mean = np.zeros(d)
        self.m2 = np.zeros(d)

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.n == 0:
            return np.clip(x, -self.clip, self.clip)
        sd = np.sqrt(self.m2 / self.n)
        out = np.zeros_like(x)
        ok = sd > 0
        out[ok] = (x[ok] - self.mean[ok]) / sd[ok]
        return np.clip(out, -self.clip, self.clip, out=out)

    def update(self, x: np.ndarray):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def step(self, e: Example) -> Example:
        out = self.transform(e.x)
        self.update(e.x)
        return Example(out, e.y)


def standardize_clip_step(stats: RunningStandardizer, e: Example, clip: float | None = None) -> Example:
    if clip is not None and clip != stats.clip:
        raise InvalidInputError("clip differs from the standardizer's clip level")
    return stats.step(e)


# -- covariance structures and diagnostics -------------------------------------------


class Covariance:
    """A d x d covariance evaluated block by block, never materialized whole."""

    d: int

    def block(self, rows, cols) -> np.ndarray:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        idx = np.arange(self.d)
        return self.block(idx, idx)


@dataclass(frozen=True)
class DenseCov(Covariance):
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError("covariance must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self):
        return self.matrix.shape[0]

    def block(self, rows, cols):
        return self.matrix[np.ix_(rows, cols)]


@dataclass(frozen=True)
class IdentityCov(Covariance):
    d: int

    def block(self, rows, cols):
        return (np.asarray(rows)[:, None] == np.asarray(cols)[None, :]).astype(float)


@dataclass(frozen=True)
class EquicorrelatedCov(Covariance):
    d: int
    c: float

    def block(self, rows, cols):
        eq = np.asarray(rows)[:, None] == np.asarray(cols)[None, :]
        return np.where(eq, 1.0, self.c)


@dataclass(frozen=True)
class Ar1Cov(Covariance):
    d: int
    rho: float

    def block(self, rows, cols):
        lag = np.abs(np.asarray(rows)[:, None] - np.asarray(cols)[None, :])
        return self.rho ** lag


def as_covariance(Sigma) -> Covariance:
    if isinstance(Sigma, Covariance):
        return Sigma
    return DenseCov(Sigma)


def design_covariance(spec: StreamSpec) -> Covariance:
    if spec.design is Design.AR1:
        return Ar1Cov(spec.d, spec.rho_corr)
    # independent standard normal or +-1 coordinates
    return IdentityCov(spec.d)


def _split(Sigma: Covariance, S):
    S = np.unique(np.asarray(S, dtype=np.intp))
    if S.size == 0:
        raise InvalidInputError("signal set is empty")
    if S.min() < 0 or S.max() >= Sigma.d:
        raise InvalidInputError("signal index out of range")
    mask = np.ones(Sigma.d, dtype=bool)
    mask[S] = False
    return S, np.flatnonzero(mask)


def _row_chunks(idx, k):
    step = max(1, 2_000_000 // max(k, 1))
    for start in range(0, idx.size, step):
        yield idx[start : start + step]


@dataclass(frozen=True)
class IrrepResult:
    rho: float
    alpha: float


def irrep_rho(Sigma, S) -> IrrepResult:
    """Smallest rho with |Cov(x_j, tau . x)| <= rho alpha ||tau||_2 / sqrt(k) for
    every noise coordinate j and every tau supported on S, where alpha is the
    smallest eigenvalue of Sigma_SS.  The worst tau is Sigma_{j,S} itself,
    so rho = max_j ||Sigma_{j,S}||_2 sqrt(k) / alpha.
    """
    Sigma = as_covariance(Sigma)
    S, N = _split(Sigma, S)
    k = S.size
    alpha = float(np.linalg.eigvalsh(Sigma.block(S, S))[0])
    if not alpha > 1e-12:
        raise InvalidInputError(f"Sigma_SS is singular (smallest eigenvalue {alpha:.3g})")
    worst = 0.0
    for rows in _row_chunks(N, k):
        blk = Sigma.block(rows, S)
        worst = max(worst, float(np.sqrt(np.einsum("ij,ij->i", blk, blk)).max()))
    return IrrepResult(rho=worst * math.sqrt(k) / alpha, alpha=alpha)


def classic_irrep(Sigma, S) -> float:
    """max over sign vectors tau of ||Sigma_{notS,S} Sigma_SS^{-1} tau||_inf.

    For each row the maximizing tau is the sign pattern of that row, so the
    value is the largest row l1 norm; no enumeration is needed.
    """
    Sigma = as_covariance(Sigma)
    S, N = _split(Sigma, S)
    SS = Sigma.block(S, S)
    if np.linalg.eigvalsh(SS)[0] <= 1e-12:
        raise InvalidInputError("Sigma_SS is singular")
    worst = 0.0
    for rows in _row_chunks(N, S.size):
        A = np.linalg.solve(SS, Sigma.block(rows, S).T).T
        worst = max(worst, float(np.abs(A).sum(axis=1).max()))
    return worst


def empirical_alpha(X: np.ndarray, S) -> float:
    """Smallest eigenvalue of the sample covariance of the signal columns."""
    XS = np.asarray(X)[:, np.asarray(S)]
    C = np.atleast_2d(np.cov(XS, rowvar=False))
    return float(np.linalg.eigvalsh(C)[0])


def diagnostics(spec: StreamSpec, model: TrueModel | None = None) -> dict:
    model = model if model is not None else make_wstar(spec)
    Sigma = design_covariance(spec)
    res = irrep_rho(Sigma, model.support) if model.k < spec.d else IrrepResult(0.0, float(np.linalg.eigvalsh(Sigma.dense())[0]))
    classic = classic_irrep(Sigma, model.support) if model.k < spec.d else 0.0
    return {"alpha": res.alpha, "rho": res.rho, "classic_irrep": classic, "R": model.R}


# -- files -------------------------------------------------------------------------------------


def _parse_float(tok: str, line: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"non-numeric field {tok!r}", line) from None
    if not math.isfinite(v):
        raise DataError(f"non-finite field {tok!r}", line)
    return v


def _dense_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[0] != "y" or header[1:] != [f"x{i}" for i in range(d)]:
            raise DataError("header must be y,x0,x1,...", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise DataError(f"expected {d + 1} fields, got {len(row)}", line)
            vals = [_parse_float(c, line) for c in row]
            yield Example(np.array(vals[1:]), vals[0])


def _sparse_text(path: Path, d: int | None):
    if d is None:
        d = 0
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                for tok in raw.split()[1:]:
                    idx, _, _ = tok.partition(":")
                    try:
                        d = max(d, int(idx) + 1)
                    except ValueError:
                        raise DataError(f"bad index in {tok!r}", lineno) from None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            toks = raw.split()
            if not toks:
                continue
            y = _parse_float(toks[0], lineno)
            x = np.zeros(d)
            for tok in toks[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise DataError(f"expected idx:val, got {tok!r}", lineno)
                try:
                    j = int(idx)
                except ValueError:
                    raise DataError(f"bad index in {tok!r}", lineno) from None
                if not 0 <= j < d:
                    raise DataError(f"index {j} outside dimension {d}", lineno)
                x[j] = _parse_float(val, lineno)
            yield Example(x, y)


def ingest_stream(path, fmt: str = "csv", d: int | None = None):
    """Yield examples from a dense CSV (``y,x0,...``) or sparse ``label idx:val`` file.

    For the sparse format ``d`` defaults to one more than the largest index
    in the file (found with a pre-scan).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    if fmt == "csv":
        return _dense_csv(path)
    if fmt in ("sparse", "svmlight"):
        return _sparse_text(path, d)
    raise InvalidInputError(f"unknown format {fmt!r}; expected 'csv' or 'sparse'")


def write_dense_csv(path, examples) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header_written = False
        for e in examples:
            if not header_written:
                w.writerow(["y"] + [f"x{i}" for i in range(e.d)])
                header_written = True
            w.writerow([repr(e.y)] + [repr(float(v)) for v in e.x])
            n += 1
    return n


def shuffled(examples, seed: int) -> list:
    """Seeded in-memory permutation for small files."""
    items = list(examples)
    perm = np.random.default_rng(seed).permutation(len(items))
    return [items[i] for i in perm]
