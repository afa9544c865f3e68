"""Command line entry point.

Exit codes: 0 ok, 2 config error, 3 data error, 4 no fittable steps.
The FSGT_CACHE environment variable overrides the configured graph cache
directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import RunConfig, load_config
from .errors import ConfigError, DataError, NoFittableStepsError
from .pipeline import cmd_audit, cmd_bridge, cmd_fit, cmd_probe, cmd_synth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NO_FITTABLE = 4


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsgt",
        description=(
            "Finite-size transport probe for saved training-field snapshots: "
            "synthesize fixtures, run threshold cascades, fit cross-scale "
            "exponents, and bridge to external metrics."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("synth", "write synthetic field snapshots"),
        ("probe", "run cascades over the snapshot tree"),
        ("fit", "fit per-step exponents and emit summaries"),
        ("bridge", "correlate transport with external metrics"),
        ("audit", "verify outputs reproduce from the dynamics files"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the run config")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument(
            "--jobs", type=int, default=None, help="probe worker count override"
        )
        cmd.add_argument(
            "--force", action="store_true", help="overwrite existing synth outputs"
        )
        cmd.add_argument(
            "-v", "--verbose", action="store_true", help="log progress to stderr"
        )
    return parser


def _apply_overrides(config: RunConfig, args) -> RunConfig:
    updates = {}
    if args.out is not None:
        updates["out_dir"] = config.out_dir.__class__(args.out)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        updates["jobs"] = args.jobs
    return dataclasses.replace(config, **updates) if updates else config


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _apply_overrides(load_config(args.config), args)
        if args.command == "synth":
            cmd_synth(config, force=args.force)
        elif args.command == "probe":
            cmd_probe(config, jobs=args.jobs)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "bridge":
            cmd_bridge(config)
        else:
            cmd_audit(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoFittableStepsError as exc:
        print(f"no fittable steps: {exc}", file=sys.stderr)
        return EXIT_NO_FITTABLE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
