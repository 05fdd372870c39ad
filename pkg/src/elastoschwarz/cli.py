"""Command-line entry point: ``elastoschwarz <subcommand> --config FILE --out DIR``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, ElastoSchwarzError
from .experiments import load_config, run_experiment

SUBCOMMANDS = {
    "analyze": "symbol-scan",
    "delta-star": "delta-star",
    "solve-two": "two-subdomain",
    "solve-grid": "grid-4x4",
    "solve-transmission": "transmission",
}
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("elastoschwarz")


def build_parser():
    parser = argparse.ArgumentParser(prog="elastoschwarz",
                                     description="Schwarz methods for time-harmonic elastic waves.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, SUBCOMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ElastoSchwarzError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for row in res.summary:
        print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    for note in res.notes:
        log.info(note)
    if res.failures:
        for f in res.failures:
            print(f"expectation failed: {f}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
