"""Time the compiled kernels against the pure-Python path.

Runs the same trajectories under both backends, reports wall times and
the worst state disagreement.  The python rows are the honest cost of
the fallback, so expect two orders of magnitude between the columns.

    python3 benchmarks/compare_backends.py [--config table1] [--horizon 2.0]
"""

import argparse
import dataclasses
import os
import time

import numpy as np

from phcosim._backend import get_kernels, reset_backend_cache
from phcosim.bench import load_config, run_budget, run_monolithic, trajectory_columns

ENV = "PHCOSIM_BACKEND"


def state_history(traj):
    cols = trajectory_columns(traj)
    grab = lambda name: np.array([float(v) for v in cols[name]])
    return np.column_stack([grab("q1"), grab("v1"), grab("q2"), grab("v2")])


def under_backend(name, fn):
    previous = os.environ.get(ENV)
    os.environ[ENV] = name
    reset_backend_cache()
    try:
        t0 = time.perf_counter()
        out = fn()
        return out, time.perf_counter() - t0
    finally:
        if previous is None:
            os.environ.pop(ENV, None)
        else:
            os.environ[ENV] = previous
        reset_backend_cache()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", default="table1", help="config file path or profile name")
    parser.add_argument("--horizon", type=float, default=2.0, help="override the horizon T")
    parser.add_argument("--budgets", default="0,8,50", help="comma-separated budgets to time")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if args.horizon is not None:
        cfg = dataclasses.replace(cfg, T=args.horizon)
    budgets = [int(tok) for tok in args.budgets.split(",") if tok.strip()]

    if get_kernels() is None:
        parser.exit(1, "compiled kernels unavailable; nothing to compare against\n")

    jobs = [(f"budget {b}", lambda b=b: run_budget(cfg, b)) for b in budgets]
    jobs.append(("monolithic", lambda: run_monolithic(cfg)))

    print(f"config {args.config}, T={cfg.T}, dt={cfg.dt} ({cfg.n_steps()} macro steps)")
    header = f"{'run':<12} {'python [s]':>12} {'native [s]':>12} {'speedup':>9} {'max |dx|':>12}"
    print(header)
    print("-" * len(header))
    for name, job in jobs:
        native, t_native = under_backend("native", job)
        python, t_python = under_backend("python", job)
        gap = float(np.max(np.abs(state_history(native) - state_history(python))))
        print(f"{name:<12} {t_python:>12.3f} {t_native:>12.3f} {t_python / t_native:>9.1f} {gap:>12.3e}")


if __name__ == "__main__":
    main()
