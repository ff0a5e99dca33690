"""Command line front end.

Subcommands: ``run`` (one budget or the monolithic reference), ``sweep``
(all configured budgets plus the reference), ``certify`` (recompute the
certificates of a stored trajectory from its metadata sidecar) and
``compare`` (RMS state error between two trajectory files).

Exit codes: 0 success with all certificates passing, 1 usage error,
2 solver failure, 3 certificate violation beyond tolerance.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._backend import backend_name
from .bench import (
    certify_run,
    load_config,
    meta_path,
    read_trajectory_csv,
    read_trajectory_meta,
    rms_state_error,
    run_budget,
    run_monolithic,
    sweep,
    write_sweep_outputs,
    write_trajectory_csv,
)
from .models import SolverFailure

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_CERTIFICATE = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; remap to the documented 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="phcosim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add_common(p):
        p.add_argument("--config", default="table1", help="config file path or shipped profile name")
        p.add_argument("--seed", type=int, default=None, help="certificate test-pair seed override")
        p.add_argument("--eps", type=float, default=None, help="inner-loop early-termination tolerance")
        p.add_argument("--variant", choices=("reduced", "lifted"), default="reduced")
        p.add_argument("--out", default=None, help="output directory for CSV artifacts")

    p_run = sub.add_parser("run", help="simulate one budget or the monolithic reference")
    add_common(p_run)
    p_run.add_argument("--budget", type=int, default=None, help="inner-iteration budget")
    p_run.add_argument("--monolithic", action="store_true", help="solve the interface exactly")

    p_sweep = sub.add_parser("sweep", help="run all configured budgets against the reference")
    add_common(p_sweep)

    p_cert = sub.add_parser("certify", help="recompute certificates for a stored trajectory")
    p_cert.add_argument("trajectory", help="trajectory CSV written by run/sweep")
    p_cert.add_argument("--seed", type=int, default=None)

    p_cmp = sub.add_parser("compare", help="RMS state error between two trajectory files")
    p_cmp.add_argument("first")
    p_cmp.add_argument("second")
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _print_report(report):
    for line in report.summary_lines():
        print(line)


def _cmd_run(args) -> int:
    cfg = _load(args)
    if args.monolithic and args.budget is not None:
        print("specify either --budget or --monolithic, not both", file=sys.stderr)
        return EXIT_USAGE
    if not args.monolithic and args.budget is None:
        print("specify --budget <int> or --monolithic", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    if args.monolithic:
        traj = run_monolithic(cfg)
    else:
        traj = run_budget(cfg, args.budget, variant=args.variant, eps=args.eps)
    report = certify_run(traj)
    elapsed = time.perf_counter() - t0
    name = "monolithic" if args.monolithic else f"budget_{args.budget}"
    print(f"run {name}: {traj.n_steps()} steps, backend {backend_name()}, {elapsed:.2f} s")
    _print_report(report)
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = write_trajectory_csv(traj, out / f"trajectory_{name}.csv")
        print(f"wrote {path} and {meta_path(path)}")
    return EXIT_OK if report.passed else EXIT_CERTIFICATE


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    report = sweep(cfg, variant=args.variant, eps=args.eps)
    elapsed = time.perf_counter() - t0
    print(f"sweep over budgets {list(cfg.budgets)}: backend {backend_name()}, {elapsed:.2f} s")
    for entry in report.entries:
        if entry.error is not None:
            print(f"  budget {entry.budget}: FAILED ({entry.error})")
            continue
        rep = entry.report
        print(
            f"  budget {entry.budget}: rms {entry.rms:.6e}, min margin {rep.margins_min:.3e}, "
            f"max pos passivity {rep.max_positive_passivity:.3e}, "
            f"max pos aug {rep.max_positive_aug:.3e}, "
            f"{'PASS' if rep.passed else 'FAIL'}"
        )
    if args.out is not None:
        paths = write_sweep_outputs(report, args.out)
        print(f"wrote {len(paths)} files to {args.out}")
    if report.failures:
        return EXIT_SOLVER
    return EXIT_OK if report.all_certified else EXIT_CERTIFICATE


def _cmd_certify(args) -> int:
    path = Path(args.trajectory)
    if not path.exists():
        print(f"trajectory file not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    mpath = meta_path(path)
    if not mpath.exists():
        print(f"metadata sidecar not found: {mpath}", file=sys.stderr)
        return EXIT_USAGE
    stored = read_trajectory_csv(path)
    cfg, run = read_trajectory_meta(mpath)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if run["kind"] == "monolithic":
        traj = run_monolithic(cfg)
    else:
        traj = run_budget(cfg, run["budget"], variant=run["variant"], eps=run["eps"])
    from .bench import trajectory_columns

    recomputed = np.asarray(trajectory_columns(traj)["q1"], dtype=float)
    q1 = stored["q1"]
    if q1.shape != recomputed.shape or np.max(np.abs(q1 - recomputed)) > 1e-9 * (
        1.0 + float(np.max(np.abs(recomputed)))
    ):
        print(f"stored trajectory does not match its metadata: {mpath}", file=sys.stderr)
        return EXIT_USAGE
    report = certify_run(traj)
    print(f"certify {path.name}: {traj.provenance}, backend {backend_name()}")
    _print_report(report)
    return EXIT_OK if report.passed else EXIT_CERTIFICATE


def _cmd_compare(args) -> int:
    paths = [Path(args.first), Path(args.second)]
    for p in paths:
        if not p.exists():
            print(f"trajectory file not found: {p}", file=sys.stderr)
            return EXIT_USAGE
    first = read_trajectory_csv(paths[0])
    second = read_trajectory_csv(paths[1])
    try:
        summary, series = rms_state_error(first, second)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    print(f"rms state error: {summary!r}")
    print(f"terminal state error: {float(series[-1])!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    handlers = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "certify": _cmd_certify,
        "compare": _cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
