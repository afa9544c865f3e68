"""CLI: ``fsgt-ingest delta|grad|schedule --config <path>``.

The config is INI-style with one section per subcommand. Relative paths
resolve against the config file's directory. Exit codes: 0 ok, 2 config
error, 3 data error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

from .errors import IngestConfigError, IngestDataError
from .export import CheckpointPair, export_delta, export_gradient
from .schedule import build_schedule, emit_schedule
from .tensors import TensorSelector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

log = logging.getLogger(__name__)


def _load_section(path: Path, section: str) -> tuple[configparser.SectionProxy, Path]:
    if not path.is_file():
        raise IngestConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise IngestConfigError(f"cannot parse config {path}: {exc}") from exc
    if not parser.has_section(section):
        raise IngestConfigError(f"config needs a [{section}] section")
    return parser[section], path.resolve().parent


def _require(section, option: str) -> str:
    if option not in section:
        raise IngestConfigError(f"[{section.name}] missing option {option!r}")
    return section[option]


def _patterns(section, option: str, default: tuple[str, ...] = ()) -> tuple[str, ...]:
    if option not in section:
        return default
    return tuple(p.strip() for p in section[option].split(",") if p.strip())


def _selector(section) -> TensorSelector:
    include = _patterns(section, "include")
    if not include:
        raise IngestConfigError(f"[{section.name}] needs include patterns")
    return TensorSelector(
        include=include,
        exclude=_patterns(section, "exclude"),
        inventory=_patterns(section, "inventory"),
    )


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw)
    return p if p.is_absolute() else base / p


def run_delta(config_path: Path) -> None:
    section, base = _load_section(config_path, "delta")
    pair = CheckpointPair(
        model_id=_require(section, "model_id"),
        step_a=int(_require(section, "step_a")),
        step_b=int(_require(section, "step_b")),
        uri_a=str(_resolve(base, _require(section, "checkpoint_a"))),
        uri_b=str(_resolve(base, _require(section, "checkpoint_b"))),
    )
    data_path, _ = export_delta(
        pair,
        _selector(section),
        _resolve(base, section.get("out_dir", "snapshots")),
        family=_require(section, "family"),
    )
    log.info("wrote %s", data_path)


def run_grad(config_path: Path) -> None:
    section, base = _load_section(config_path, "grad")
    data_path, _ = export_gradient(
        _resolve(base, _require(section, "artifact")),
        _selector(section),
        _resolve(base, section.get("out_dir", "snapshots")),
        family=_require(section, "family"),
        model_id=_require(section, "model_id"),
        step=int(_require(section, "step")),
    )
    log.info("wrote %s", data_path)


def run_schedule(config_path: Path) -> None:
    section, base = _load_section(config_path, "schedule")
    schedule = build_schedule(
        kind=_require(section, "kind"),
        eta_max=float(_require(section, "eta_max")),
        eta_min=float(_require(section, "eta_min")),
        t_warm=int(_require(section, "t_warm")),
        t_total=int(_require(section, "t_total")),
    )
    out = emit_schedule(schedule, _resolve(base, section.get("out", "schedule.json")))
    log.info("wrote %s", out)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fsgt-ingest",
        description=(
            "Convert model checkpoints and gradient dumps into field-snapshot "
            "files, and emit learning-rate schedule metadata."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("delta", "export a checkpoint-difference field"),
        ("grad", "export a raw-gradient field"),
        ("schedule", "emit learning-rate schedule JSON"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config_path = Path(args.config)
        if args.command == "delta":
            run_delta(config_path)
        elif args.command == "grad":
            run_grad(config_path)
        else:
            run_schedule(config_path)
    except IngestConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestDataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
