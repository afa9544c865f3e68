"""Run configuration: an INI-style key-value tree with sections.

Relative paths resolve against the config file's directory. The subset of
settings that determines probe records (family, probe, graph, nulls, synth)
is hashed into ``config_hash`` and embedded in every output file to guard
resumption: a probe resume against outputs carrying a different hash is
refused.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .bridge import DEFAULT_METRIC_FLOOR, LrSchedule, METRIC_KINDS
from .errors import ConfigError
from .nulls import DEFAULT_NULL_BASE_SEED, NullVariant
from .snapshots import DEFAULT_SUBSAMPLE_CAP

CACHE_ENV_VAR = "FSGT_CACHE"


@dataclass(frozen=True)
class ProbeSettings:
    alpha: float = 0.3
    q_threshold: float = 0.90
    max_steps: int = 500
    subsample_cap: int = DEFAULT_SUBSAMPLE_CAP
    # diagnostic per-step activity dumps; does not affect record values and
    # is therefore excluded from the config hash
    record_trace: bool = False


@dataclass(frozen=True)
class GraphSettings:
    m: int = 2
    seed: int = 42


@dataclass(frozen=True)
class NullSettings:
    variants: tuple[str, ...] = ()
    base_seed: int = DEFAULT_NULL_BASE_SEED


@dataclass(frozen=True)
class SynthSettings:
    scales: tuple[int, ...] = ()
    steps: tuple[int, ...] = ()
    seed: int = 0
    kind: str = "gaussian"


@dataclass(frozen=True)
class BridgeSettings:
    metric_file: Path | None = None
    metric_kind: str = "perplexity"
    floor: float = DEFAULT_METRIC_FLOOR
    eval_line: tuple[str, ...] = ()
    schedule: LrSchedule | None = None


@dataclass(frozen=True)
class RunConfig:
    family: str
    snapshot_root: Path
    cache_dir: Path
    out_dir: Path
    jobs: int = 1
    probe: ProbeSettings = field(default_factory=ProbeSettings)
    graph: GraphSettings = field(default_factory=GraphSettings)
    nulls: NullSettings = field(default_factory=NullSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    scales: tuple[int, ...] = ()
    window: tuple[int, int] = (0, 1)
    require_all_scales: bool = False
    rolling_window: int = 11
    bridge: BridgeSettings = field(default_factory=BridgeSettings)

    def validate(self, for_fit: bool = False) -> None:
        if not self.family:
            raise ConfigError("family must be non-empty")
        if not 0.0 < self.probe.alpha < 1.0:
            raise ConfigError("probe.alpha must lie in (0, 1)")
        if not 0.0 < self.probe.q_threshold < 1.0:
            raise ConfigError("probe.q_threshold must lie in (0, 1)")
        if self.probe.max_steps < 1:
            raise ConfigError("probe.max_steps must be >= 1")
        if self.probe.subsample_cap < 1:
            raise ConfigError("probe.subsample_cap must be >= 1")
        if self.graph.m < 1:
            raise ConfigError("graph.m must be >= 1")
        if self.graph.seed < 0:
            raise ConfigError("graph.seed must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        valid_nulls = {v.value for v in NullVariant if v is not NullVariant.REAL}
        for v in self.nulls.variants:
            if v not in valid_nulls:
                raise ConfigError(f"unknown null variant {v!r}")
        if self.window[0] >= self.window[1]:
            raise ConfigError(
                f"window lo must be < hi, got {list(self.window)}"
            )
        if self.rolling_window < 1 or self.rolling_window % 2 == 0:
            raise ConfigError("rolling_window must be odd and >= 1")
        if self.synth.kind not in ("gaussian", "lognormal"):
            raise ConfigError(f"unknown synth.kind {self.synth.kind!r}")
        if list(self.scales) != sorted(set(self.scales)):
            raise ConfigError("scales must be strictly ascending")
        if for_fit and len(self.scales) < 3:
            raise ConfigError("fitting runs need at least 3 scales")
        if self.bridge.metric_kind not in METRIC_KINDS:
            raise ConfigError(
                f"unknown bridge.metric_kind {self.bridge.metric_kind!r}"
            )
        if not self.bridge.floor > 0:
            raise ConfigError("bridge.floor must be positive")

    def config_hash(self) -> str:
        """SHA-256 over the normalized record-affecting config subset."""
        subset = {
            "family": self.family,
            "probe": {
                "alpha": self.probe.alpha,
                "q_threshold": self.probe.q_threshold,
                "max_steps": self.probe.max_steps,
                "subsample_cap": self.probe.subsample_cap,
            },
            "graph": {"m": self.graph.m, "seed": self.graph.seed},
            "nulls": {
                "variants": sorted(self.nulls.variants),
                "base_seed": self.nulls.base_seed,
            },
            "synth": {
                "scales": list(self.synth.scales),
                "steps": list(self.synth.steps),
                "seed": self.synth.seed,
                "kind": self.synth.kind,
            },
        }
        blob = json.dumps(subset, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def resolved_cache_dir(self) -> Path:
        env = os.environ.get(CACHE_ENV_VAR)
        return Path(env) if env else self.cache_dir


def _split_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _int_list(raw: str, label: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in _split_list(raw))
    except ValueError as exc:
        raise ConfigError(f"{label}: expected comma-separated integers") from exc


def _get(parser, section, option, conv, default):
    if not parser.has_option(section, option):
        return default
    raw = parser.get(section, option)
    try:
        return conv(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{section}] {option}: invalid value {raw!r}") from exc


def _to_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    base = path.resolve().parent

    def _path(raw: str) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    if not parser.has_section("run"):
        raise ConfigError("config needs a [run] section")
    family = _get(parser, "run", "family", str, "")
    snapshot_root = _get(parser, "run", "snapshot_root", _path, base / "snapshots")
    cache_dir = _get(parser, "run", "cache_dir", _path, base / "cache")
    out_dir = _get(parser, "run", "out_dir", _path, base / "out")
    jobs = _get(parser, "run", "jobs", int, 1)

    probe = ProbeSettings(
        alpha=_get(parser, "probe", "alpha", float, 0.3),
        q_threshold=_get(parser, "probe", "q_threshold", float, 0.90),
        max_steps=_get(parser, "probe", "max_steps", int, 500),
        subsample_cap=_get(
            parser, "probe", "subsample_cap", int, DEFAULT_SUBSAMPLE_CAP
        ),
        record_trace=_get(parser, "probe", "record_trace", _to_bool, False),
    )
    graph = GraphSettings(
        m=_get(parser, "graph", "m", int, 2),
        seed=_get(parser, "graph", "seed", int, 42),
    )
    nulls = NullSettings(
        variants=tuple(
            _get(parser, "nulls", "variants", _split_list, [])
        ),
        base_seed=_get(
            parser, "nulls", "base_seed", int, DEFAULT_NULL_BASE_SEED
        ),
    )
    synth = SynthSettings(
        scales=_get(
            parser, "synth", "scales", lambda r: _int_list(r, "synth.scales"), ()
        ),
        steps=_get(
            parser, "synth", "steps", lambda r: _int_list(r, "synth.steps"), ()
        ),
        seed=_get(parser, "synth", "seed", int, 0),
        kind=_get(parser, "synth", "kind", str, "gaussian"),
    )
    scales = _get(
        parser, "fit", "scales", lambda r: _int_list(r, "fit.scales"), ()
    )
    window = _get(
        parser, "fit", "window", lambda r: _int_list(r, "fit.window"), (0, 1)
    )
    if len(window) != 2:
        raise ConfigError("fit.window must be two integers: lo, hi")
    require_all = _get(parser, "fit", "require_all_scales", _to_bool, False)
    rolling = _get(parser, "fit", "rolling_window", int, 11)

    schedule = None
    if parser.has_option("bridge", "schedule_kind"):
        for opt in ("eta_max", "eta_min", "t_warm", "t_total"):
            if not parser.has_option("bridge", opt):
                raise ConfigError(f"bridge schedule needs option {opt!r}")
        schedule = LrSchedule(
            kind=parser.get("bridge", "schedule_kind").strip(),
            eta_max=_get(parser, "bridge", "eta_max", float, 0.0),
            eta_min=_get(parser, "bridge", "eta_min", float, 0.0),
            t_warm=_get(parser, "bridge", "t_warm", int, 0),
            t_total=_get(parser, "bridge", "t_total", int, 0),
        )
    bridge = BridgeSettings(
        metric_file=_get(parser, "bridge", "metric_file", _path, None),
        metric_kind=_get(parser, "bridge", "metric_kind", str, "perplexity"),
        floor=_get(parser, "bridge", "floor", float, DEFAULT_METRIC_FLOOR),
        eval_line=tuple(_get(parser, "bridge", "eval_line", _split_list, [])),
        schedule=schedule,
    )

    config = RunConfig(
        family=family,
        snapshot_root=snapshot_root,
        cache_dir=cache_dir,
        out_dir=out_dir,
        jobs=jobs,
        probe=probe,
        graph=graph,
        nulls=nulls,
        synth=synth,
        scales=tuple(scales),
        window=(int(window[0]), int(window[1])),
        require_all_scales=require_all,
        rolling_window=rolling,
        bridge=bridge,
    )
    config.validate()
    return config
