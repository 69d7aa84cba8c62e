"""Command line entry point: ``tcaff run|baseline|timing|metrics``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .scenario import ScenarioError, builtin_names, load_scenario, parse_overrides


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("need at least one threshold")
    return vals


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("scenario", help="built-in scenario name or path to a YAML file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario value, e.g. filter.window=5 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tcaff", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run MNO-CLIPPER + TCAFF on every robot pair")
    _scenario_args(run)
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    run.add_argument("--no-maps", action="store_true", help="skip the maps/ message dumps")

    base = sub.add_parser("baseline", help="per-tick registration without temporal filtering")
    _scenario_args(base)
    base.add_argument("--min-assoc", type=_int_list, default=[2], metavar="A[,B,...]")
    base.add_argument("--mode", choices=["clipper_threshold", "mno_only"], default="clipper_threshold")

    tim = sub.add_parser("timing", help="per-call wall time of mapping, MNO-CLIPPER and TCAFF")
    _scenario_args(tim)

    met = sub.add_parser("metrics", help="recompute metrics from a run.csv")
    met.add_argument("csv", type=Path)
    met.add_argument("--fa-trans-m", type=float, default=1.0)
    met.add_argument("--fa-head-deg", type=float, default=10.0)

    sub.add_parser("list", help="list built-in scenarios")
    return ap


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(builtin_names()))
            return 0
        if args.command == "metrics":
            if not args.csv.exists():
                raise ScenarioError(f"no such file: {args.csv}")
            records = harness.read_csv(args.csv)
            _dump(harness.metrics_report(records, args.fa_trans_m, args.fa_head_deg))
            return 0
        scn = load_scenario(args.scenario, parse_overrides(args.overrides), args.seed)
        if args.command == "run":
            res = harness.run_scenario(scn, out_dir=args.out, dump_maps=not args.no_maps)
            _dump(res.metrics["overall"])
            print(f"wrote {args.out / 'run.csv'} and {args.out / 'metrics.json'}", file=sys.stderr)
        elif args.command == "baseline":
            _dump(harness.run_baseline(scn, args.min_assoc, args.mode))
        elif args.command == "timing":
            _dump(harness.timing_report(scn))
    except (ScenarioError, ValueError, KeyError) as exc:
        print(f"tcaff: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
