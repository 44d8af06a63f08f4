"""Command-line entry point: ``sparsestream {gen,run,sweep,report,diag}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys

from . import harness
from .datagen import StreamSpec, diagnostics, eval_stream_index, make_stream, make_wstar, write_dense_csv
from .errors import ConfigError, SparseStreamError

log = logging.getLogger("sparsestream")


def _cmd_gen(args):
    spec = StreamSpec.from_config(harness.load_json(args.spec))
    stream = make_stream(spec, eval_stream_index(args.seed), make_wstar(spec))
    n = write_dense_csv(args.out, itertools.islice(stream, args.n))
    log.info("wrote %d examples to %s", n, args.out)
    return 0


def _cmd_run(args):
    cfg = harness.ExperimentConfig.from_config(harness.load_json(args.config))
    out = args.out or cfg.output
    if out is None:
        raise ConfigError("no output path: pass --out or set 'output' in the config")
    res = harness.run_experiment(cfg, workers=args.workers)
    harness.write_results(out, res.rows)
    for seed, err in res.failures.items():
        print(f"seed {seed} aborted: {err}", file=sys.stderr)
    return 4 if res.failures else 0


def _cmd_sweep(args):
    cfg = harness.SweepConfig.from_config(harness.load_json(args.config))
    res = harness.sweep(cfg, workers=args.workers)
    keys = list(cfg.grid)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + [res.metric])
        for row in res.table:
            w.writerow([row[k] for k in keys] + [repr(row[res.metric])])
    print(json.dumps({"best": res.best, "grid": cfg.grid, "metric": res.metric}))
    return 0


def _cmd_report(args):
    summary = harness.report(args.inputs, metric=args.metric, svg=args.svg, logx=args.logx, logy=args.logy, out=args.out)
    if args.out is None:
        cols = ["algo", "t", "n", args.metric]
        w = csv.writer(sys.stdout)
        w.writerow(cols)
        for s in summary:
            w.writerow([s[c] for c in cols])
    return 0


def _cmd_diag(args):
    spec = StreamSpec.from_config(harness.load_json(args.spec))
    diag = diagnostics(spec)
    for key in ("alpha", "rho", "classic_irrep", "R"):
        print(f"{key}\t{diag[key]:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparsestream", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic stream to a dense CSV")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=1, help="evaluation stream seed")
    g.set_defaults(func=_cmd_gen)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="grid search on the development stream")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    rep = sub.add_parser("report", help="median-across-seeds summary and optional SVG chart")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True)
    rep.add_argument("--svg")
    rep.add_argument("--out")
    rep.add_argument("--metric", default="window_loss")
    rep.add_argument("--logx", action="store_true")
    rep.add_argument("--logy", action="store_true")
    rep.set_defaults(func=_cmd_report)

    d = sub.add_parser("diag", help="design diagnostics for a stream spec")
    d.add_argument("--spec", required=True)
    d.set_defaults(func=_cmd_diag)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SparseStreamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
