"""Compiled vs numpy kernels, and SSR vs SGD per-step cost.

    python benchmarks/bench_kernels.py [--d 100000] [--steps 2000]
"""

import argparse
import math
import time

import numpy as np

from sparsestream import kernels
from sparsestream.baselines import SgdLearner
from sparsestream.core import SQUARED, Example
from sparsestream.ssr import Mode, SsrHyperparams, SsrLearner


def per_call(fn, n):
    best = math.inf
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(n):
            fn()
        best = min(best, (time.perf_counter() - start) / n)
    return best


def kernel_table(d, n):
    rng = np.random.default_rng(0)
    x, theta = rng.standard_normal(d), rng.standard_normal(d)
    w, avg = np.zeros(d), np.zeros(d)
    rows = []
    for name, mod in kernels.available_backends().items():
        rows.append((name, "dot", per_call(lambda: mod.dot(w, x), n)))
        rows.append((name, "dual_update", per_call(lambda: mod.dual_update(theta, w, x, 1e-9, 1.0, 0.5, 1.0, 10.0, None, 0.0, True), n)))
        rows.append((name, "dual_update+avg", per_call(lambda: mod.dual_update(theta, w, x, 1e-9, 1.0, 0.5, 1.0, 10.0, avg, 0.01, True), n)))
    return rows


def learner_table(d, steps):
    rng = np.random.default_rng(1)
    pool = [Example(rng.standard_normal(d) / math.sqrt(d), float(rng.normal())) for _ in range(16)]

    def run(make):
        learner = make()
        start = time.perf_counter()
        for i in range(steps):
            learner.step(pool[i % 16])
        return (time.perf_counter() - start) / steps

    hp = SsrHyperparams(eta=0.5, lam=0.01, epsilon=10.0)
    return [
        ("sgd", run(lambda: SgdLearner(d, SQUARED, eta=1.0))),
        ("ssr", run(lambda: SsrLearner(d, hp, SQUARED, Mode.STREAMING))),
        ("ssr_avg", run(lambda: SsrLearner(d, hp, SQUARED, Mode.AVERAGED))),
    ]


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--d", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=2000)
    args = p.parse_args()

    print(f"kernels, d={args.d}")
    for backend, name, sec in kernel_table(args.d, max(1, args.steps // 10)):
        print(f"  {backend:8s} {name:16s} {sec * 1e6:9.1f} us")

    print(f"learners, backend {kernels.BACKEND}, d={args.d}, {args.steps} steps")
    rows = learner_table(args.d, args.steps)
    base = rows[0][1]
    for name, sec in rows:
        print(f"  {name:8s} {sec * 1e6:9.1f} us/step  {sec / base:5.2f}x sgd")


if __name__ == "__main__":
    main()
