"""Command-line entry point: ``isac-pf run | fuse | selftest``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .fusion import FusionSettings
from .harness import METHODS, build_scenario, emit_report, run_multipoint, run_tracking, summary_table


def _scenario(args):
    overrides = {"seed": args.seed}
    if args.steps is not None:
        overrides["n_steps"] = args.steps
    return build_scenario(args.config, **overrides)


def cmd_run(args) -> int:
    sc = _scenario(args)
    reports = []
    for method in args.method:
        rep = run_tracking(sc, method, args.trials)
        reports.append(rep)
        if args.out:
            emit_report(rep, args.out)
    table = summary_table(reports)
    print(table)
    if args.out:
        (Path(args.out) / "summary.txt").write_text(table + "\n")
    return 0


def cmd_fuse(args) -> int:
    sc = _scenario(args)
    fusion = sc.fusion
    if args.fusion_method or args.kappa is not None:
        fusion = FusionSettings(**{**vars(fusion),
                                   **({"method": args.fusion_method} if args.fusion_method else {}),
                                   **({"kappa": args.kappa} if args.kappa is not None else {})})
    reports = []
    for z in args.stations:
        rep = run_multipoint(sc, z, args.trials, fusion=fusion)
        reports.append(rep)
        if args.out:
            emit_report(rep, args.out)
    table = summary_table(reports)
    print(table)
    if args.out:
        (Path(args.out) / "summary.txt").write_text(table + "\n")
    return 0


def cmd_selftest(args) -> int:
    import pytest

    tests = Path(__file__).resolve().parents[2] / "tests"
    if not tests.is_dir():
        print(f"test suite not found at {tests}", file=sys.stderr)
        return 2
    extra = ["-q"] + (["-k", args.k] if args.k else [])
    return int(pytest.main([str(tests), *extra]))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isac-pf", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--trials", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--steps", type=int, default=None, help="override the number of tracking steps")
        sp.add_argument("--out", default=None, help="directory for CSV reports")

    run = sub.add_parser("run", help="single-station Monte-Carlo tracking")
    common(run)
    run.add_argument("--method", nargs="+", choices=METHODS, default=["pf_sltr"])
    run.set_defaults(func=cmd_run)

    fuse = sub.add_parser("fuse", help="multi-station tracking with fusion")
    common(fuse)
    fuse.add_argument("--stations", type=int, nargs="+", default=[1, 2])
    fuse.add_argument("--fusion-method", choices=["dual", "stratified"], default=None)
    fuse.add_argument("--kappa", type=float, default=None)
    fuse.set_defaults(func=cmd_fuse)

    st = sub.add_parser("selftest", help="run the oracle and invariant test suite")
    st.add_argument("-k", default=None, help="pytest -k expression")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
