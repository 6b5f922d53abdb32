"""Command line entry point: ``micromotion run|list|sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .errors import MicromotionError
from .runner import SWEEP_PARAMS, list_scenarios, load_config, run_scenario, sweep


def _overrides(cfg, args):
    changes = {}
    if args.out is not None:
        changes["out"] = args.out
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.hopf_grid is not None:
        changes["hopf_grid"] = args.hopf_grid
    if args.strip_sites is not None:
        changes["strip_sites"] = args.strip_sites
    cfg = replace(cfg, **changes)
    cfg.validate()
    return cfg


def _common(p):
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads (default 1)")
    p.add_argument("--hopf-grid", type=int, help="grid points per axis of the (k1, k2, alpha) torus")
    p.add_argument("--strip-sites", type=int, help="sites across the open strip")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="micromotion", description="Floquet micro-motion Hopf toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a builtin scenario or a JSON config file")
    run.add_argument("scenario")
    _common(run)

    ls = sub.add_parser("list", help="list builtin scenarios and any given config files")
    ls.add_argument("configs", nargs="*")

    sw = sub.add_parser("sweep", help="rerun a scenario over values of one parameter")
    sw.add_argument("parameter", choices=SWEEP_PARAMS)
    sw.add_argument("values", nargs="*", type=float)
    sw.add_argument("--scenario", default="example1-nontrivial", help="base scenario or config file")
    _common(sw)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "list":
            for name, params in list_scenarios(args.configs):
                echo = " ".join(f"{k}={v:g}" if isinstance(v, float) else f"{k}={v}" for k, v in params.items())
                print(f"{name}\t{echo}")
            return 0
        if args.command == "run":
            cfg = _overrides(load_config(args.scenario), args)
            report = run_scenario(cfg)
            print(json.dumps({"scenario": report.scenario, "status": report.status, "topology": report.topology,
                              "edge_modes": report.edge_modes, "errors": report.errors}, indent=2, default=str))
            return 0 if report.ok else 1
        cfg = _overrides(load_config(args.scenario), args)
        result = sweep(cfg, args.parameter, args.values)
        for row in result["rows"]:
            print("\t".join(str(x) for x in row))
        return 0 if all(r.ok for r in result["reports"]) else 1
    except MicromotionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
