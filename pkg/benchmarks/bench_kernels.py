"""Compiled kernel vs pure-Python engine on the bundled scenarios.

Usage: python3 benchmarks/bench_kernels.py [--duration 2.0] [--repeat 3]
"""

import argparse
import statistics
import time

import numpy as np

from parentswarm.sim.config import bundled_config
from parentswarm.sim.engine import HAVE_COMPILED, run_problem
from parentswarm.sim.problem import build_problem

SCENARIOS = ["pd_si_4", "pd_hetero_4", "arise_hetero_4", "arise_hetero_20"]


def timed(cfg, engine, repeat):
    times, out = [], None
    for _ in range(repeat):
        prob = build_problem(cfg)
        t0 = time.perf_counter()
        out = run_problem(prob, engine)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), np.asarray(out[0])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=2.0, help="simulated seconds per run")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not HAVE_COMPILED:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'scenario':<18}{'steps':>8}{'python s':>11}{'compiled s':>12}{'speedup':>9}{'max |diff|':>12}")
    for name in SCENARIOS:
        cfg = bundled_config(name, {"integration.duration": args.duration})
        steps = int(round(args.duration / cfg.integration.dt))
        tp, lp = timed(cfg, "python", args.repeat)
        tc, lc = timed(cfg, "compiled", args.repeat)
        diff = float(np.max(np.abs(lp - lc)))
        print(f"{name:<18}{steps:>8}{tp:>11.3f}{tc:>12.4f}{tp / tc:>9.0f}x{diff:>12.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
