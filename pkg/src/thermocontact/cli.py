"""Command-line front end.

    thermocontact run <config> [--out DIR] [--verbose] [--threads N]
    thermocontact study <config> --tau-list T1,T2,... [--out DIR]
    thermocontact verify [--verbose]

`run` executes one scenario config and writes ledger.csv, snapshots, summary
figures and a structured run_report; the exit status is 0 iff every hard
invariant held.  `study` runs the tau-refinement table.  `verify` runs the
built-in acceptance suite on the shipped scenarios.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _apply_threads(n):
    if n is None:
        return
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(limits=n)
    except ImportError:
        # best effort for libraries that re-read the environment
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def cmd_run(args) -> int:
    from . import report, stepper
    from .config import ConfigError, parse_config
    try:
        spec = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or f"out_{spec.name}"
    progress = None
    if args.verbose:
        def progress(k, n, rep):
            print(f"step {k}/{n}  t={rep.t:.4g}  mech_it={rep.mech_iters} "
                  f"min_theta={rep.min_theta:.3e}")
    t0 = time.perf_counter()
    try:
        traj = stepper.run(spec.scenario, progress=progress)
    except stepper.InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    _, ok = report.write_outputs(out_dir, traj, time.perf_counter() - t0,
                                 verbose=args.verbose)
    if args.verbose or not ok:
        print(f"run report in {out_dir}/run_report "
              f"({'all invariants held' if ok else 'INVARIANT FAILURES'})")
    return 0 if ok else 1


def cmd_study(args) -> int:
    from . import report, stepper
    from .config import ConfigError, parse_config
    try:
        spec = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    taus = spec.tau_list
    if args.tau_list:
        taus = [float(t) for t in args.tau_list.split(",")]
    if not taus:
        print("study needs --tau-list or a tau_list config key", file=sys.stderr)
        return 2
    T = spec.scenario.T
    for tau in taus:
        n = T / tau
        if tau <= 0 or abs(n - round(n)) > 1e-9:
            print(f"tau {tau} does not divide the horizon T={T}", file=sys.stderr)
            return 2
    out_dir = args.out or f"out_{spec.name}_study"
    os.makedirs(out_dir, exist_ok=True)
    rows = stepper.convergence_study(spec.scenario, taus)
    path = report.write_study_csv(out_dir, rows)
    if args.verbose:
        for r in rows:
            print(f"tau={r.tau:.5g} err_u={r.err_u:.3e} order={r.order_u:.3f} "
                  f"R_cum={r.R_cum:.4e}")
    print(f"study table written to {path}")
    return 0


def cmd_verify(args) -> int:
    from .verification import run_all
    results = run_all(progress=print)
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} criteria passed")
    if failed:
        print("failed: " + ", ".join(r.name for r in failed))
        return 1
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="thermocontact", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--threads", type=int, default=None,
                    help="limit linear-algebra thread pools")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--verbose", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_study = sub.add_parser("study", help="tau-refinement study")
    p_study.add_argument("config")
    p_study.add_argument("--tau-list", default=None)
    p_study.add_argument("--out", default=None)
    p_study.add_argument("--verbose", action="store_true")
    p_study.set_defaults(func=cmd_study)

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--verbose", action="store_true")
    p_ver.set_defaults(func=cmd_verify)

    args = ap.parse_args(argv)
    _apply_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
