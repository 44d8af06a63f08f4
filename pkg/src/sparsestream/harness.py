"""Experiment driver: configs, prequential runs, dev-set sweeps, rate fits, reports."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import LassoOracleLearner, PnormLearner, SgdLearner, get_learner_factory
from .core import LossModel, WeightVector
from .datagen import (
    DEV_STREAM,
    ExampleStream,
    StreamSpec,
    eval_stream_index,
    ingest_stream,
    make_wstar,
    shuffled,
)
from .errors import ConfigError, DataError, NumericalError
from .metrics import RESULT_COLUMNS, WindowLoss, param_error, support_metrics
from .ssr import Mode, Schedule, SsrHyperparams, SsrLearner, TheoryMode, eta_from_alpha, theory_lambda

log = logging.getLogger(__name__)

__all__ = [
    "FileStream",
    "ExperimentConfig",
    "SweepConfig",
    "ExperimentResult",
    "SweepResult",
    "build_learner",
    "run_experiment",
    "sweep",
    "rate_fit",
    "report",
    "write_results",
    "read_results",
    "load_json",
]

ALGOS = ("ssr", "ssr_avg", "sgd", "pnorm", "lasso_oracle")
_HP_KEYS = {
    "ssr": {"eta", "alpha", "lambda", "epsilon", "schedule"},
    "ssr_avg": {"eta", "alpha", "lambda", "epsilon", "schedule", "B", "delta", "rho"},
    "sgd": {"eta"},
    "pnorm": {"lambda", "step_scale", "p", "q"},
    "lasso_oracle": {"lambda", "cap", "tol", "max_sweeps"},
}


@dataclass(frozen=True)
class FileStream:
    path: str
    format: str = "csv"
    d: int | None = None
    loss_kind: LossModel = field(default_factory=LossModel)
    shuffle: bool = False

    @classmethod
    def from_config(cls, obj: dict) -> "FileStream":
        unknown = set(obj) - {"path", "format", "d", "loss_kind", "shuffle"}
        if unknown:
            raise ConfigError(f"unknown stream keys: {sorted(unknown)}")
        kw = dict(obj)
        if "loss_kind" in kw:
            kw["loss_kind"] = LossModel.from_config(kw["loss_kind"])
        return cls(**kw)

    @property
    def model(self) -> LossModel:
        return self.loss_kind


_EXP_KEYS = {"stream", "algo", "hp", "T", "window", "seeds", "record_every", "output"}


@dataclass(frozen=True)
class ExperimentConfig:
    stream: StreamSpec | FileStream
    algo: str
    hp: dict = field(default_factory=dict)
    T: int = 10_000
    window: int = 1000
    seeds: tuple = (1,)
    record_every: int = 100
    output: str | None = None

    def __post_init__(self):
        if isinstance(self.stream, dict):
            s = self.stream
            object.__setattr__(self, "stream", FileStream.from_config(s) if "path" in s else StreamSpec.from_config(s))
        if self.algo not in ALGOS and not self.algo.startswith("plugin:"):
            raise ConfigError(f"unknown algo {self.algo!r}; expected one of {ALGOS} or plugin:<name>")
        if self.algo in _HP_KEYS:
            unknown = set(self.hp) - _HP_KEYS[self.algo]
            if unknown:
                raise ConfigError(f"unknown hyperparameters for {self.algo}: {sorted(unknown)}")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError("T must be a positive integer")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ConfigError("record_every must be a positive integer")
        if self.window < 1:
            raise ConfigError("window must be positive")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise ConfigError("seeds must be nonempty")
        if any(not 0 <= s < 2**64 for s in seeds):
            raise ConfigError("seeds must be unsigned 64-bit integers")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "hp", dict(self.hp))

    @classmethod
    def from_config(cls, obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("experiment config must be a JSON object")
        unknown = set(obj) - _EXP_KEYS
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        for key in ("stream", "algo"):
            if key not in obj:
                raise ConfigError(f"experiment config needs {key!r}")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def model(self) -> LossModel:
        return self.stream.model


_SWEEP_KEYS = {"base", "grid", "dev_size", "selection_metric"}


@dataclass(frozen=True)
class SweepConfig:
    base: ExperimentConfig
    grid: dict
    dev_size: int = 1000
    selection_metric: str = "window_loss"

    def __post_init__(self):
        if isinstance(self.base, dict):
            object.__setattr__(self, "base", ExperimentConfig.from_config(self.base))
        if not self.grid or any(not isinstance(v, (list, tuple)) or not v for v in self.grid.values()):
            raise ConfigError("grid must map each hyperparameter to a nonempty list")
        if self.base.algo in _HP_KEYS:
            unknown = set(self.grid) - _HP_KEYS[self.base.algo]
            if unknown:
                raise ConfigError(f"unknown grid keys for {self.base.algo}: {sorted(unknown)}")
        if self.dev_size < 1:
            raise ConfigError("dev_size must be positive")
        if self.selection_metric not in ("window_loss", "param_err"):
            raise ConfigError("selection_metric must be window_loss or param_err")
        if self.selection_metric == "param_err" and not isinstance(self.base.stream, StreamSpec):
            raise ConfigError("param_err selection needs a synthetic stream with known w*")

    @classmethod
    def from_config(cls, obj: dict) -> "SweepConfig":
        if not isinstance(obj, dict):
            raise ConfigError("sweep config must be a JSON object")
        unknown = set(obj) - _SWEEP_KEYS
        if unknown:
            raise ConfigError(f"unknown sweep keys: {sorted(unknown)}")
        if "base" not in obj or "grid" not in obj:
            raise ConfigError("sweep config needs base and grid")
        try:
            return cls(**obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def points(self):
        keys = list(self.grid)
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            yield dict(zip(keys, combo))


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# -- learners ------------------------------------------------------------------------------


def _ssr_hp(hp: dict, d: int, T: int) -> SsrHyperparams:
    if "eta" in hp and "alpha" in hp:
        raise ConfigError("give eta or alpha, not both")
    eta = eta_from_alpha(hp["alpha"]) if "alpha" in hp else hp.get("eta", 0.0)
    lam = hp.get("lambda")
    if lam is None:
        if "B" in hp and "delta" in hp:
            rho = hp.get("rho")
            mode = TheoryMode.ESTIMATION if rho is None else TheoryMode.IRREPRESENTABLE
            lam = theory_lambda(mode, hp["B"], d, T, hp["delta"], rho)
        else:
            lam = 0.0
    sched = hp.get("schedule")
    return SsrHyperparams(
        eta=float(eta),
        lam=float(lam),
        epsilon=float(hp.get("epsilon", 1.0)),
        schedule=None if sched is None else Schedule.from_config(sched),
    )


def build_learner(algo: str, d: int, hp: dict, model: LossModel, T: int = 1, instrument: bool = False):
    if algo == "ssr":
        return SsrLearner(d, _ssr_hp(hp, d, T), model, Mode.STREAMING, instrument=instrument)
    if algo == "ssr_avg":
        return SsrLearner(d, _ssr_hp(hp, d, T), model, Mode.AVERAGED, instrument=instrument)
    if algo == "sgd":
        return SgdLearner(d, model, eta=float(hp.get("eta", 1.0)))
    if algo == "pnorm":
        return PnormLearner(d, model, lam=float(hp.get("lambda", 0.0)), step_scale=float(hp.get("step_scale", 1.0)), p=hp.get("p"), q=hp.get("q"))
    if algo == "lasso_oracle":
        return LassoOracleLearner(
            d,
            model,
            lam=float(hp.get("lambda", 0.0)),
            cap=int(hp.get("cap", 2500)),
            tol=float(hp.get("tol", 1e-8)),
            max_sweeps=int(hp.get("max_sweeps", 1000)),
        )
    if algo.startswith("plugin:"):
        return get_learner_factory(algo.split(":", 1)[1])(d, dict(hp), model)
    raise ConfigError(f"unknown algo {algo!r}")


def _estimate(learner) -> WeightVector:
    est = getattr(learner, "estimate", None)
    return est() if est is not None else learner.weights()


# -- runs ----------------------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    rows: list
    failures: dict = field(default_factory=dict)
    learners: dict = field(default_factory=dict)

    def by_seed(self):
        out = {}
        for r in self.rows:
            out.setdefault(r["seed"], []).append(r)
        return out


def _open_stream(cfg: ExperimentConfig, seed: int, truth):
    s = cfg.stream
    if isinstance(s, StreamSpec):
        return ExampleStream(s, truth, eval_stream_index(seed))
    it = ingest_stream(s.path, s.format, s.d)
    if s.shuffle:
        it = shuffled(it, seed)
    return iter(it)


def _stream_dim(cfg: ExperimentConfig, first) -> int:
    return cfg.stream.d if isinstance(cfg.stream, StreamSpec) else first.d


def _run_seed(cfg: ExperimentConfig, seed: int, truth, instrument: bool, examples=None, record=True):
    model = cfg.model
    stream = iter(examples) if examples is not None else _open_stream(cfg, seed, truth)
    first = next(stream, None)
    if first is None:
        raise DataError("input stream is empty")
    stream = itertools.chain([first], stream)
    d = _stream_dim(cfg, first)
    learner = build_learner(cfg.algo, d, cfg.hp, model, T=cfg.T, instrument=instrument)
    averaged = isinstance(learner, SsrLearner) and learner.state.mode is Mode.AVERAGED
    if truth is not None:
        S = np.asarray(truth.support)
        wS = truth.wstar.values[S]
    window = WindowLoss(cfg.window)
    regret = 0.0 if truth is not None else None
    rows = []
    run_id = f"{cfg.algo}/s{seed}"
    t0 = time.perf_counter_ns()
    for t, e in enumerate(itertools.islice(stream, cfg.T), 1):
        z = learner.step(e)
        loss = model.value(z, e.y)
        window.push(loss)
        if truth is not None:
            regret += loss - model.value(float(e.x[S] @ wS), e.y)
        if record and (t % cfg.record_every == 0 or t == cfg.T):
            hook = getattr(learner, "checkpoint", None)
            if hook is not None:
                hook()
            w = learner.weights()
            row = {
                "run_id": run_id,
                "seed": seed,
                "algo": cfg.algo,
                "t": t,
                "inst_loss": loss,
                "window_loss": window.value(),
                "param_err": None,
                "avg_param_err": None,
                "regret": regret,
                "support_size": w.nnz,
                "support_precision": None,
                "support_recall": None,
            }
            if truth is not None:
                row["param_err"] = param_error(w, truth.wstar)
                if averaged:
                    row["avg_param_err"] = param_error(learner.estimate(), truth.wstar)
                _, row["support_precision"], row["support_recall"] = support_metrics(w, truth.support)
            row["elapsed_ns"] = time.perf_counter_ns() - t0
            rows.append(row)
    if not record:
        hook = getattr(learner, "checkpoint", None)
        if hook is not None:
            hook()
    if rows and rows[-1]["t"] < cfg.T:
        log.warning("stream for seed %s ended after %d of %d examples", seed, rows[-1]["t"], cfg.T)
    return rows, learner, window


def _truth(cfg):
    return make_wstar(cfg.stream) if isinstance(cfg.stream, StreamSpec) else None


def _seed_task(args):
    cfg, seed, instrument = args
    try:
        rows, _, _ = _run_seed(cfg, seed, _truth(cfg), instrument)
        return seed, rows, None
    except NumericalError as exc:
        return seed, [], str(exc)


def run_experiment(cfg: ExperimentConfig, instrument: bool = False, workers: int = 1, keep_learners: bool = False) -> ExperimentResult:
    """Run every seed prequentially; a numerical failure aborts that seed only."""
    result = ExperimentResult(rows=[])
    if workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_seed_task, [(cfg, s, instrument) for s in cfg.seeds]))
        for seed, rows, err in outs:
            result.rows.extend(rows)
            if err is not None:
                result.failures[seed] = err
        return result
    truth = _truth(cfg)
    for seed in cfg.seeds:
        try:
            rows, learner, _ = _run_seed(cfg, seed, truth, instrument)
        except NumericalError as exc:
            log.error("seed %s aborted: %s", seed, exc)
            result.failures[seed] = str(exc)
            continue
        result.rows.extend(rows)
        if keep_learners:
            result.learners[seed] = learner
    return result


# -- sweeps ------------------------------------------------------------------------------------------


@dataclass
class SweepResult:
    best: dict
    table: list
    metric: str


def _lam_key(point):
    return point.get("lambda", 0.0)


def _eta_key(point):
    for k in ("eta", "alpha", "step_scale"):
        if k in point:
            return point[k]
    return 0.0


def _dev_examples(cfg: SweepConfig):
    base = cfg.base
    if isinstance(base.stream, StreamSpec):
        truth = make_wstar(base.stream)
        return truth, ExampleStream(base.stream, truth, DEV_STREAM).take(cfg.dev_size)
    ex = list(itertools.islice(ingest_stream(base.stream.path, base.stream.format, base.stream.d), cfg.dev_size))
    return None, ex


def _trial(cfg: SweepConfig, point: dict, truth, examples):
    base = cfg.base
    trial_cfg = replace(base, hp={**base.hp, **point}, T=len(examples), seeds=(0,))
    try:
        _, learner, window = _run_seed(trial_cfg, 0, truth, False, examples=examples, record=False)
    except NumericalError:
        return math.inf
    if cfg.selection_metric == "window_loss":
        return window.value()
    return param_error(_estimate(learner), truth.wstar)


def _trial_task(args):
    cfg, point = args
    truth, examples = _dev_examples(cfg)
    return _trial(cfg, point, truth, examples)


def sweep(cfg: SweepConfig, workers: int = 1) -> SweepResult:
    """Exhaustive grid on the development stream; lowest final metric wins,
    ties going to the smaller lambda and then the smaller step parameter."""
    points = list(cfg.points())
    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            scores = list(ex.map(_trial_task, [(cfg, p) for p in points]))
    else:
        truth, examples = _dev_examples(cfg)
        scores = [_trial(cfg, p, truth, examples) for p in points]
    table = []
    for p, s in zip(points, scores):
        table.append({**p, cfg.selection_metric: s})

    def key(i):
        s = scores[i]
        return (math.inf if not math.isfinite(s) else s, _lam_key(points[i]), _eta_key(points[i]), i)

    best = points[min(range(len(points)), key=key)]
    return SweepResult(best=dict(best), table=table, metric=cfg.selection_metric)


# -- analysis -------------------------------------------------------------------------------------------


def rate_fit(points) -> float:
    """Least-squares slope of log(err) against log(T)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("rate_fit needs at least 3 points")
    T = np.array([p[0] for p in pts], dtype=float)
    err = np.array([p[1] for p in pts], dtype=float)
    if np.any(err <= 0) or np.any(T <= 0):
        raise ValueError("rate_fit needs positive T and errors")
    slope, _ = np.polyfit(np.log(T), np.log(err), 1)
    return float(slope)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in RESULT_COLUMNS])


_NUMERIC = [c for c in RESULT_COLUMNS if c not in ("run_id", "seed", "algo", "t")]


def read_results(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in RESULT_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing column {missing[0]!r}")
        extra = [c for c in header if c not in RESULT_COLUMNS]
        if extra:
            raise DataError(f"{path}: unexpected column {extra[0]!r}")
        rows = []
        for r in reader:
            row = {"run_id": r["run_id"], "seed": r["seed"], "algo": r["algo"]}
            try:
                row["t"] = int(r["t"])
                for c in _NUMERIC:
                    row[c] = float(r[c]) if r[c] != "" else math.nan
            except ValueError as exc:
                raise DataError(f"{path} line {reader.line_num}: {exc}") from None
            rows.append(row)
    return rows


def summarize(rows):
    """Median across seeds per (algo, t), for every numeric column."""
    groups = {}
    for r in rows:
        groups.setdefault((r["algo"], r["t"]), []).append(r)
    summary = []
    for (algo, t), grp in sorted(groups.items()):
        out = {"algo": algo, "t": t, "n": len(grp)}
        for c in _NUMERIC:
            vals = np.array([g[c] for g in grp], dtype=float)
            vals = vals[~np.isnan(vals)]
            out[c] = float(np.median(vals)) if vals.size else math.nan
        summary.append(out)
    return summary


def _svg(summary, metric, path, logx, logy):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(6, 4))
    algos = sorted({s["algo"] for s in summary})
    for algo in algos:
        pts = [(s["t"], s[metric]) for s in summary if s["algo"] == algo and not math.isnan(s[metric])]
        if pts:
            ts, vs = zip(*pts)
            ax.plot(ts, vs, label=algo)
    ax.set_xlabel("examples")
    ax.set_ylabel(metric)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def report(paths, metric: str = "window_loss", svg=None, logx=False, logy=False, out=None):
    """Summarize result CSVs into median-across-seeds curves.

    Writes the summary CSV to ``out`` (if given) and a line chart of
    ``metric`` to ``svg`` (if given).  Returns the summary rows.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if metric not in _NUMERIC:
        raise ConfigError(f"unknown metric {metric!r}")
    rows = []
    for p in paths:
        if not Path(p).exists():
            raise DataError(f"no such results file: {p}")
        rows.extend(read_results(p))
    if not rows:
        raise DataError("no result rows to report")
    summary = summarize(rows)
    if out is not None:
        cols = ["algo", "t", "n"] + _NUMERIC
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for s in summary:
                w.writerow([_fmt(s[c]) for c in cols])
    if svg is not None:
        _svg(summary, metric, svg, logx, logy)
    return summary
