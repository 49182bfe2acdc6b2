"""Command line entry point.

    leakagesim run     [--config FILE] [--topology KIND] [--duration S] [--dt S] [--out DIR]
    leakagesim compare [--topologies h4_unipolar,hch5_d2] ...
    leakagesim sweep   --param c_pv --values 24e-9,132e-9,352e-9 ...

Exit codes: 0 success, 1 validation error, 2 simulation divergence, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .circuit import SimulationDiverged
from .config import ConfigError, SimConfig, load_config
from .scenario import format_report, run_scenario

EXIT_OK, EXIT_VALIDATION, EXIT_DIVERGED, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("leakagesim")


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with SimConfig keys")
    common.add_argument("--topology", help="h4_unipolar, h4_bipolar, h5_plain or hch5_d2")
    common.add_argument("--duration", type=float, help="simulated time in seconds")
    common.add_argument("--dt", type=float, help="integration step in seconds (<= 2e-6)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--decimate", type=int, default=1, help="keep every n-th sample in CSVs")
    common.add_argument("--jobs", type=int, default=1, help="parallel runs for compare/sweep")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="leakagesim",
                                description="Leakage-current simulator for transformerless PV inverters")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one topology")
    cmp_ = sub.add_parser("compare", parents=[common], help="compare topologies")
    cmp_.add_argument("--topologies", default="h4_unipolar,hch5_d2",
                      help="comma-separated topology list")
    sw = sub.add_parser("sweep", parents=[common], help="sweep one config parameter")
    sw.add_argument("--param", required=True, help="SimConfig field to sweep")
    sw.add_argument("--values", required=True, type=_floats, help="comma-separated values")
    return p


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    changes = {k: getattr(args, k) for k in ("topology", "duration", "dt")
               if getattr(args, k) is not None}
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        kw = dict(decimate=args.decimate, workers=args.jobs)
        if args.command == "run":
            report = run_scenario(cfg, "single", args.out, **kw)
        elif args.command == "compare":
            report = run_scenario(cfg, "compare", args.out,
                                  topologies=[t for t in args.topologies.split(",") if t], **kw)
        else:
            report = run_scenario(cfg, "sweep", args.out, parameter=args.param,
                                  values=args.values, **kw)
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line else ""
        print(f"configuration error{where}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        if exc.snapshot is not None:
            print(f"last good state: {exc.snapshot}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(format_report(report))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
