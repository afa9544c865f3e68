"""Batch stages: synth -> probe -> fit -> bridge, plus the provenance audit.

Every output is JSON with sorted keys and shortest-round-trip floats, so a
rerun with identical config and inputs reproduces each file byte for byte.
The probe stage is resumable: records already present in a dynamics file
with a matching config hash are kept, everything else is recomputed, and a
resumed run equals a fresh one bitwise. One corrupt snapshot never aborts a
batch; it becomes an error record and the run continues.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .bridge import (
    ExternalMetricSeries,
    MetricEntry,
    fit_external_exponent,
    lr_partial_pearson,
    pearson,
    reconstruct_lr,
)
from .cascade import CascadeConfig, run_cascade
from .config import RunConfig
from .errors import ConfigError, DataError, FsgtError, NoFittableStepsError
from .graphs import GraphKey, get_or_build
from .nulls import NullVariant, decompose, generate_null
from .scaling import (
    SKIP_COMMON_GRID,
    StepScalingFit,
    StepSkip,
    TransportRecord,
    fit_step,
    rolling_median,
    tertile_deltas,
    window_summary,
)
from .snapshots import (
    FieldSnapshot,
    NULL_FIELD_KINDS,
    SnapshotManifest,
    read_manifest,
    read_snapshot,
    write_snapshot,
)

log = logging.getLogger(__name__)

OUTPUT_SCHEMA_VERSION = "1"

REAL_VARIANT = "real"


# ---------------------------------------------------------------------------
# deterministic JSON io


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(obj), encoding="utf-8")


def _dynamics_dir(config: RunConfig) -> Path:
    return config.out_dir / "dynamics"


def _dynamics_path(config: RunConfig, model_id: str, variant: str) -> Path:
    return _dynamics_dir(config) / f"{config.family}__{model_id}__{variant}.json"


def _errors_path(config: RunConfig) -> Path:
    return _dynamics_dir(config) / f"{config.family}__errors.json"


def _fits_path(config: RunConfig, variant: str) -> Path:
    return config.out_dir / "fits" / f"{config.family}__{variant}__fits.json"


def _summary_path(config: RunConfig) -> Path:
    return config.out_dir / "summary" / f"{config.family}__summary.json"


def _bridge_path(config: RunConfig) -> Path:
    return config.out_dir / "bridge" / f"{config.family}__bridge.json"


# ---------------------------------------------------------------------------
# synth


def cmd_synth(config: RunConfig, force: bool = False) -> None:
    """Write synthetic field snapshots for each (scale, step) of the config.

    Each field draws from an independent PCG64 stream seeded with
    (synth.seed, scale, step), so reruns are reproducible file for file.
    """
    if not config.synth.scales or not config.synth.steps:
        raise ConfigError("synth needs non-empty [synth] scales and steps")
    for scale in config.synth.scales:
        model_dir = config.snapshot_root / config.family / f"n{scale}"
        for step in config.synth.steps:
            manifest = SnapshotManifest(
                family=config.family,
                model_id=f"n{scale}",
                field_kind="synthetic",
                step=step,
                n_elements=scale,
                seed=config.synth.seed,
                source=f"synthetic {config.synth.kind} seed={config.synth.seed}",
            )
            stem = manifest.default_stem()
            target = model_dir / (stem + ".fsnap")
            if target.exists() and not force:
                raise DataError(
                    f"{target} exists; pass --force to overwrite"
                )
            rng = np.random.default_rng([config.synth.seed, scale, step])
            if config.synth.kind == "gaussian":
                values = rng.standard_normal(scale)
            else:
                values = rng.lognormal(0.0, 1.0, scale)
            snapshot = FieldSnapshot(
                manifest=manifest, values=values.astype(np.float32)
            )
            write_snapshot(snapshot, model_dir, stem=stem)
            log.info("synth wrote %s", target)


# ---------------------------------------------------------------------------
# probe


def _discover_manifests(config: RunConfig) -> list[tuple[Path, SnapshotManifest]]:
    root = config.snapshot_root / config.family
    if not root.is_dir():
        raise DataError(f"snapshot root {root} does not exist")
    found = []
    for path in sorted(root.rglob("*.json")):
        manifest = read_manifest(path)
        if manifest.family != config.family:
            log.warning("%s: family %r does not match run; skipped", path, manifest.family)
            continue
        if manifest.field_kind in NULL_FIELD_KINDS:
            log.warning(
                "%s: stored null snapshot ignored (nulls are generated on the fly)",
                path,
            )
            continue
        found.append((path, manifest))
    if not found:
        raise DataError(f"no snapshots found under {root}")
    found.sort(key=lambda item: (item[1].model_id, item[1].step))
    seen = set()
    for _, manifest in found:
        key = (manifest.model_id, manifest.step)
        if key in seen:
            raise DataError(
                f"duplicate snapshot for model {manifest.model_id} "
                f"step {manifest.step}"
            )
        seen.add(key)
    return found


def _load_dynamics_file(path: Path, expect_hash: str) -> dict:
    raw = json.loads(path.read_text(encoding="utf-8"))
    if raw.get("config_hash") != expect_hash:
        raise DataError(
            f"{path}: config hash {raw.get('config_hash', '?')[:12]}... does not "
            f"match current config {expect_hash[:12]}...; refusing to resume "
            "(use a fresh out dir)"
        )
    return raw


def _cascade_config(config: RunConfig) -> CascadeConfig:
    return CascadeConfig(
        alpha=config.probe.alpha,
        q_threshold=config.probe.q_threshold,
        max_steps=config.probe.max_steps,
        record_trace=config.probe.record_trace,
        subsample_cap=config.probe.subsample_cap,
    )


def _probe_one(
    snapshot_path: Path,
    variant: str,
    config: RunConfig,
    graphs: dict[int, object],
) -> tuple[TransportRecord, list[int] | None]:
    snapshot = read_snapshot(snapshot_path)
    if variant != REAL_VARIANT:
        snapshot = generate_null(
            snapshot, NullVariant(variant), base_seed=config.nulls.base_seed
        )
    graph = graphs[snapshot.manifest.n_elements]
    result = run_cascade(snapshot, graph, _cascade_config(config))
    record = TransportRecord.from_cascade(snapshot.manifest, variant, result)
    return record, result.activity_trace


def cmd_probe(config: RunConfig, jobs: int | None = None) -> None:
    """Run the cascade probe over every discovered snapshot and enabled null
    variant, appending per-step transport records to the dynamics files."""
    jobs = config.jobs if jobs is None else jobs
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    manifests = _discover_manifests(config)
    cfg_hash = config.config_hash()
    variants = [REAL_VARIANT] + sorted(config.nulls.variants)

    if config.scales:
        for _, manifest in manifests:
            if manifest.n_elements not in config.scales:
                log.warning(
                    "snapshot %s step %d has N=%d outside configured scales; "
                    "recorded but excluded from fits",
                    manifest.model_id,
                    manifest.step,
                    manifest.n_elements,
                )

    existing: dict[tuple[str, str], list[TransportRecord]] = {}
    done: set[tuple[str, str, int]] = set()
    model_ids = sorted({m.model_id for _, m in manifests})
    for model_id in model_ids:
        for variant in variants:
            path = _dynamics_path(config, model_id, variant)
            if not path.exists():
                continue
            raw = _load_dynamics_file(path, cfg_hash)
            records = [TransportRecord.from_dict(r) for r in raw["records"]]
            existing[(model_id, variant)] = records
            for r in records:
                done.add((model_id, variant, r.step))

    tasks = [
        (path, manifest, variant)
        for path, manifest in manifests
        for variant in variants
        if (manifest.model_id, variant, manifest.step) not in done
    ]

    graphs: dict[int, object] = {}
    for n in sorted({m.n_elements for p, m, _ in tasks}):
        graphs[n] = get_or_build(
            GraphKey(n_nodes=n, m=config.graph.m, seed=config.graph.seed),
            config.resolved_cache_dir(),
        )

    results: dict[tuple[str, str, int], TransportRecord] = {}
    errors: list[dict] = []

    def _run(task):
        path, manifest, variant = task
        key = (manifest.model_id, variant, manifest.step)
        try:
            return key, _probe_one(path, variant, config, graphs), None
        except (FsgtError, OSError) as exc:
            return key, None, f"{type(exc).__name__}: {exc}"

    if jobs == 1 or len(tasks) <= 1:
        outcomes = [_run(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run, tasks))

    for key, outcome, error in outcomes:
        if error is not None:
            model_id, variant, step = key
            errors.append(
                {"model_id": model_id, "variant": variant, "step": step, "error": error}
            )
            log.error("probe failed for %s/%s step %d: %s", *key[:2], key[2], error)
        else:
            record, trace = outcome
            results[key] = record
            if trace is not None:
                model_id, variant, step = key
                write_json(
                    config.out_dir
                    / "traces"
                    / f"{config.family}__{model_id}__{variant}__step{step:08d}.json",
                    {
                        "schema_version": OUTPUT_SCHEMA_VERSION,
                        "family": config.family,
                        "model_id": model_id,
                        "variant": variant,
                        "step": step,
                        "activity_trace": trace,
                    },
                )

    for model_id in model_ids:
        for variant in variants:
            records = list(existing.get((model_id, variant), []))
            records.extend(
                rec
                for key, rec in results.items()
                if key[0] == model_id and key[1] == variant
            )
            if not records:
                continue
            records.sort(key=lambda r: r.step)
            steps = [r.step for r in records]
            if len(set(steps)) != len(steps):
                raise DataError(
                    f"duplicate steps in dynamics for {model_id}/{variant}"
                )
            write_json(
                _dynamics_path(config, model_id, variant),
                {
                    "schema_version": OUTPUT_SCHEMA_VERSION,
                    "config_hash": cfg_hash,
                    "family": config.family,
                    "model_id": model_id,
                    "variant": variant,
                    "records": [r.to_dict() for r in records],
                },
            )

    if errors:
        errors.sort(key=lambda e: (e["model_id"], e["variant"], e["step"]))
        write_json(
            _errors_path(config),
            {
                "schema_version": OUTPUT_SCHEMA_VERSION,
                "config_hash": cfg_hash,
                "family": config.family,
                "errors": errors,
            },
        )
    log.info(
        "probe complete: %d records computed, %d reused, %d errors",
        len(results),
        len(done),
        len(errors),
    )


# ---------------------------------------------------------------------------
# fit


def _load_all_dynamics(config: RunConfig) -> dict[str, list[TransportRecord]]:
    """Records per variant, read back from the dynamics files."""
    cfg_hash = config.config_hash()
    dyn_dir = _dynamics_dir(config)
    if not dyn_dir.is_dir():
        raise DataError(f"no dynamics outputs under {dyn_dir}; run probe first")
    per_variant: dict[str, list[TransportRecord]] = {}
    paths = sorted(dyn_dir.glob(f"{config.family}__*.json"))
    paths = [p for p in paths if p != _errors_path(config)]
    if not paths:
        raise DataError(f"no dynamics files for family {config.family}")
    for path in paths:
        raw = _load_dynamics_file(path, cfg_hash)
        records = [TransportRecord.from_dict(r) for r in raw["records"]]
        per_variant.setdefault(raw["variant"], []).extend(records)
    for records in per_variant.values():
        records.sort(key=lambda r: (r.model_id, r.step))
    return per_variant


def _fit_variant(
    config: RunConfig, records: list[TransportRecord]
) -> tuple[list[StepScalingFit], list[StepSkip], list[dict]]:
    excluded = []
    if config.scales:
        fit_records = [r for r in records if r.n_elements in config.scales]
        excluded = [
            {
                "model_id": r.model_id,
                "step": r.step,
                "n_elements": r.n_elements,
                "reason": "scale_not_configured",
            }
            for r in records
            if r.n_elements not in config.scales
        ]
    else:
        fit_records = list(records)

    by_step: dict[int, list[TransportRecord]] = {}
    for r in fit_records:
        by_step.setdefault(r.step, []).append(r)

    fits: list[StepScalingFit] = []
    skips: list[StepSkip] = []
    for step in sorted(by_step):
        recs = by_step[step]
        if config.require_all_scales and config.scales:
            present = {r.n_elements for r in recs}
            if present != set(config.scales):
                skips.append(StepSkip(step=step, reason=SKIP_COMMON_GRID))
                continue
        outcome = fit_step(recs, require_all_scales=config.require_all_scales)
        if isinstance(outcome, StepSkip):
            skips.append(outcome)
        else:
            fits.append(outcome)
    return fits, skips, excluded


def _summary_stat(stat) -> list | None:
    return None if stat is None else [stat.mean, stat.std]


def _build_fit_outputs(
    config: RunConfig, per_variant: dict[str, list[TransportRecord]]
) -> tuple[dict[str, dict], dict]:
    cfg_hash = config.config_hash()
    window = config.window
    fits_by_variant: dict[str, list[StepScalingFit]] = {}
    fits_files: dict[str, dict] = {}
    summaries = {}

    for variant in sorted(per_variant):
        records = per_variant[variant]
        fits, skips, excluded = _fit_variant(config, records)
        fits_by_variant[variant] = fits
        fit_scope = (
            [r for r in records if r.n_elements in config.scales]
            if config.scales
            else records
        )
        summaries[variant] = window_summary(fits, fit_scope, window)
        fits_files[variant] = {
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "config_hash": cfg_hash,
            "family": config.family,
            "variant": variant,
            "window": list(window),
            "scales": list(config.scales),
            "require_all_scales": config.require_all_scales,
            "fits": [f.to_dict() for f in fits],
            "skipped_steps": [
                {"step": s.step, "reason": s.reason} for s in skips
            ],
            "excluded_records": excluded,
        }

    if sum(len(f) for f in fits_by_variant.values()) == 0:
        raise NoFittableStepsError(
            f"no step of family {config.family} has >= 3 clean scales"
        )

    summary = _build_figure_summary(
        config, per_variant, fits_by_variant, summaries
    )
    return fits_files, summary


def _vrel_bands(
    config: RunConfig, records: list[TransportRecord], summary
) -> dict:
    models: dict[str, dict] = {}
    for r in sorted(records, key=lambda r: (r.model_id, r.step)):
        if r.degenerate or r.v_rel is None:
            continue
        entry = models.setdefault(r.model_id, {"series": []})
        entry["series"].append([r.step, r.v_rel])
    lo, hi = config.window
    for model_id, entry in models.items():
        window_vals = [v for s, v in entry["series"] if lo <= s <= hi]
        entry["window_mean"] = (
            float(np.mean(window_vals)) if window_vals else None
        )
        entry["window_std"] = (
            float(np.std(window_vals, ddof=1)) if len(window_vals) > 1 else 0.0
        )
        entry["n_window"] = len(window_vals)
    return {
        "variant": REAL_VARIANT,
        "models": models,
        "cross_model_cv": summary.vrel_cv,
    }


def _exponent_series(config: RunConfig, fits: list[StepScalingFit]) -> dict:
    ordered = sorted(fits, key=lambda f: f.step)
    steps = [f.step for f in ordered]
    block = {
        "steps": steps,
        "d": [f.d for f in ordered],
        "z": [f.z for f in ordered],
        "beta": [f.beta for f in ordered],
        "delta": [f.delta for f in ordered],
    }
    if ordered:
        rolling = {"window_len": config.rolling_window}
        for channel in ("d", "z", "delta"):
            smooth = rolling_median(
                list(zip(steps, block[channel])), config.rolling_window
            )
            rolling[channel] = [v for _, v in smooth]
        block["rolling"] = rolling
    else:
        block["rolling"] = None
    return block


def _closure_row(summary) -> dict:
    return {
        "empty": summary.empty,
        "n_fits": summary.n_fits,
        "d": _summary_stat(summary.d),
        "z": _summary_stat(summary.z),
        "beta": _summary_stat(summary.beta),
        "delta": _summary_stat(summary.delta),
        "vrel_model_means": summary.vrel_model_means,
        "vrel_cv": summary.vrel_cv,
        "n_records": summary.n_records,
    }


def _null_skeleton(
    config: RunConfig,
    fits_by_variant: dict[str, list[StepScalingFit]],
    summaries: dict,
) -> dict | None:
    if REAL_VARIANT not in fits_by_variant or "n0" not in fits_by_variant:
        return None
    real_fits = fits_by_variant[REAL_VARIANT]
    n0_fits = fits_by_variant["n0"]
    if not real_fits or not n0_fits:
        return None
    window = config.window
    n0_by_step = {f.step: f for f in n0_fits}
    dz_series = [
        [f.step, f.z - n0_by_step[f.step].z]
        for f in sorted(real_fits, key=lambda f: f.step)
        if f.step in n0_by_step
    ]
    block: dict = {
        "z_window": {
            v: _summary_stat(summaries[v].z) for v in sorted(summaries)
        },
        "delta_z_series": dz_series,
        "tertiles": None,
        "decomposition": None,
    }
    in_window = [
        (s, dz) for s, dz in dz_series if window[0] <= s <= window[1]
    ]
    if in_window:
        tert = tertile_deltas(real_fits, n0_fits, window)
        block["tertiles"] = [
            {"label": label, "mean": mean, "std": std, "n": n}
            for label, mean, std, n in tert.tertiles
        ]
    if "n2" in summaries:
        decomp: dict = {}
        stats = {v: summaries[v] for v in (REAL_VARIANT, "n0", "n2")}
        if all(not s.empty for s in stats.values()):
            z_parts = decompose(
                stats[REAL_VARIANT].z.mean, stats["n0"].z.mean, stats["n2"].z.mean
            )
            decomp["z"] = {
                "total": z_parts.total,
                "dist": z_parts.dist,
                "assign": z_parts.assign,
            }
        vrel_means = {}
        for v, s in stats.items():
            if s.vrel_model_means:
                vrel_means[v] = float(
                    np.mean(list(s.vrel_model_means.values()))
                )
        if len(vrel_means) == 3:
            v_parts = decompose(
                vrel_means[REAL_VARIANT], vrel_means["n0"], vrel_means["n2"]
            )
            decomp["vrel"] = {
                "total": v_parts.total,
                "dist": v_parts.dist,
                "assign": v_parts.assign,
            }
        block["decomposition"] = decomp or None
    return block


def _build_figure_summary(
    config: RunConfig,
    per_variant: dict[str, list[TransportRecord]],
    fits_by_variant: dict[str, list[StepScalingFit]],
    summaries: dict,
) -> dict:
    real_records = per_variant.get(REAL_VARIANT, [])
    real_fit_records = (
        [r for r in real_records if r.n_elements in config.scales]
        if config.scales
        else real_records
    )
    real_fits = fits_by_variant.get(REAL_VARIANT, [])
    compressibility = {
        "variant": REAL_VARIANT,
        "points": [
            [f.step, f.r2_z, f.r2_delta]
            for f in sorted(real_fits, key=lambda f: f.step)
        ],
    }
    lo, hi = config.window
    in_window = [f for f in real_fits if lo <= f.step <= hi]
    for channel in ("r2_d", "r2_z", "r2_delta"):
        vals = [getattr(f, channel) for f in in_window]
        compressibility[f"window_mean_{channel}"] = (
            float(np.mean(vals)) if vals else None
        )

    return {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_hash": config.config_hash(),
        "family": config.family,
        "window": list(config.window),
        "provenance": {
            "dynamics_files": sorted(
                p.name
                for p in _dynamics_dir(config).glob(f"{config.family}__*.json")
                if p != _errors_path(config)
            ),
            "scales": list(config.scales),
        },
        "vrel_bands": _vrel_bands(
            config, real_fit_records, summaries.get(REAL_VARIANT)
        )
        if REAL_VARIANT in summaries
        else None,
        "closure_table": {
            v: _closure_row(s) for v, s in sorted(summaries.items())
        },
        "exponent_series": {
            v: _exponent_series(config, fits_by_variant[v])
            for v in sorted(fits_by_variant)
        },
        "compressibility_map": compressibility,
        "null_skeleton": _null_skeleton(config, fits_by_variant, summaries),
        "bridge_panels": None,
    }


def cmd_fit(config: RunConfig) -> None:
    """Fit per-step cross-scale exponents for every variant and emit the
    fits files plus the figure-summary JSON."""
    config.validate(for_fit=True)
    per_variant = _load_all_dynamics(config)
    fits_files, summary = _build_fit_outputs(config, per_variant)
    for variant, payload in fits_files.items():
        write_json(_fits_path(config, variant), payload)
    write_json(_summary_path(config), summary)
    log.info(
        "fit complete: %s",
        ", ".join(
            f"{v}: {len(p['fits'])} fits/{len(p['skipped_steps'])} skipped"
            for v, p in sorted(fits_files.items())
        ),
    )


# ---------------------------------------------------------------------------
# bridge


def _load_metric_series(config: RunConfig) -> ExternalMetricSeries:
    path = config.bridge.metric_file
    if path is None:
        raise ConfigError("bridge needs [bridge] metric_file")
    if not path.is_file():
        raise DataError(f"metric table not found: {path}")
    entries = []
    if path.suffix.lower() == ".json":
        rows = json.loads(path.read_text(encoding="utf-8"))
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    for row in rows:
        try:
            scale = row.get("n", row.get("n_elements_or_params"))
            if scale is None:
                raise KeyError("n / n_elements_or_params")
            entries.append(
                MetricEntry(
                    model_id=str(row["model_id"]),
                    n=int(scale),
                    step=int(row["step"]),
                    value=float(row["value"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataError(f"bad metric row {row!r}: {exc}") from exc
    return ExternalMetricSeries(
        family=config.family,
        metric_kind=config.bridge.metric_kind,
        entries=tuple(entries),
        floor=config.bridge.floor,
    )


def _schedule_eta(config: RunConfig, steps: list[int]) -> list[float] | None:
    schedule = config.bridge.schedule
    if schedule is None:
        return None
    if any(not 0 <= s <= schedule.t_total for s in steps):
        return None
    return [reconstruct_lr(schedule, s) for s in steps]


def _correlation_row(
    internal: str,
    external: str,
    scope: str,
    model_id: str | None,
    xs: list[float],
    ys: list[float],
    etas: list[float] | None,
    journal: list[str],
) -> dict | None:
    n = len(xs)
    if n < 3:
        journal.append(
            f"skipped {scope}/{model_id or '-'} {internal} vs {external}: "
            f"only {n} aligned steps"
        )
        return None
    stats = pearson(xs, ys)
    row = {
        "internal": internal,
        "external": external,
        "scope": scope,
        "model_id": model_id,
        "n": n,
        "r": stats.r,
        "p": stats.p,
        "degenerate": stats.degenerate,
        "r_lr_partial": None,
        "degenerate_partial": None,
    }
    if etas is not None and n >= 4:
        partial = lr_partial_pearson(xs, ys, etas)
        row["r_lr_partial"] = partial.r
        row["degenerate_partial"] = partial.degenerate
    elif etas is None:
        journal.append(
            f"no LR partial for {scope}/{model_id or '-'} {internal} vs "
            f"{external}: schedule missing or steps out of range"
        )
    else:
        journal.append(
            f"no LR partial for {scope}/{model_id or '-'} {internal} vs "
            f"{external}: need n >= 4"
        )
    return row


def _build_bridge_outputs(
    config: RunConfig,
    per_variant: dict[str, list[TransportRecord]],
    real_fits: list[StepScalingFit],
) -> dict:
    series = _load_metric_series(config)
    eval_line = config.bridge.eval_line or None
    journal: list[str] = []

    exponents = []
    for step in series.steps():
        fit = fit_external_exponent(series, step, eval_line)
        if fit is None:
            journal.append(
                f"external exponent skipped at step {step}: fewer than 3 scales"
            )
            continue
        exponents.append([step, fit[0], fit[1]])

    records = [
        r
        for r in per_variant.get(REAL_VARIANT, [])
        if not r.degenerate
        and (not config.scales or r.n_elements in config.scales)
    ]
    by_model: dict[str, dict[int, TransportRecord]] = {}
    for r in records:
        by_model.setdefault(r.model_id, {})[r.step] = r

    metric_by_model: dict[str, dict[int, float]] = {}
    for e in series.entries:
        metric_by_model.setdefault(e.model_id, {})[e.step] = e.value

    rows = []
    for model_id in sorted(by_model):
        model_records = by_model[model_id]
        metric = metric_by_model.get(model_id, {})
        steps = sorted(set(model_records) & set(metric))
        if set(model_records) != set(metric):
            journal.append(
                f"model {model_id}: step intersection used "
                f"({len(steps)} of {len(model_records)} record steps)"
            )
        vrel = [model_records[s].v_rel for s in steps]
        norm_dur = [
            model_records[s].n_steps / model_records[s].n_elements for s in steps
        ]
        metric_vals = [metric[s] for s in steps]
        etas = _schedule_eta(config, steps)
        for internal, xs in (("v_rel", vrel), ("norm_duration", norm_dur)):
            row = _correlation_row(
                internal,
                f"metric:{series.metric_kind}",
                "model",
                model_id,
                xs,
                metric_vals,
                etas,
                journal,
            )
            if row is not None:
                rows.append(row)

    # family level: internal observables vs the external exponent series
    steps_by_record: dict[int, list[TransportRecord]] = {}
    for r in records:
        steps_by_record.setdefault(r.step, []).append(r)
    family_steps = sorted(steps_by_record)
    mean_vrel = {
        s: float(np.mean([r.v_rel for r in steps_by_record[s]]))
        for s in family_steps
    }
    mean_norm_dur = {
        s: float(np.mean([r.n_steps / r.n_elements for r in steps_by_record[s]]))
        for s in family_steps
    }
    d_by_step = {f.step: f.d for f in real_fits}
    exp_by_step = {int(step): slope for step, slope, _ in exponents}

    for internal, table in (
        ("mean_v_rel", mean_vrel),
        ("mean_norm_duration", mean_norm_dur),
        ("d", d_by_step),
    ):
        steps = sorted(set(table) & set(exp_by_step))
        if set(table) != set(exp_by_step):
            journal.append(
                f"family {internal}: step intersection used "
                f"({len(steps)} common steps)"
            )
        xs = [table[s] for s in steps]
        ys = [exp_by_step[s] for s in steps]
        etas = _schedule_eta(config, steps)
        row = _correlation_row(
            internal,
            "external_exponent",
            "family",
            None,
            xs,
            ys,
            etas,
            journal,
        )
        if row is not None:
            rows.append(row)

    return {
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "config_hash": config.config_hash(),
        "family": config.family,
        "metric_kind": series.metric_kind,
        "floor": series.floor,
        "eval_line": list(config.bridge.eval_line),
        "schedule": (
            None
            if config.bridge.schedule is None
            else config.bridge.schedule.to_dict()
        ),
        "external_exponents": exponents,
        "rows": rows,
        "journal": journal,
    }


def _load_fits_file(config: RunConfig, variant: str) -> list[StepScalingFit]:
    path = _fits_path(config, variant)
    if not path.is_file():
        raise DataError(f"fits output missing: {path}; run fit first")
    raw = json.loads(path.read_text(encoding="utf-8"))
    if raw.get("config_hash") != config.config_hash():
        raise DataError(f"{path}: config hash mismatch")
    return [StepScalingFit.from_dict(f) for f in raw["fits"]]


def cmd_bridge(config: RunConfig) -> None:
    """Correlate internal transport observables with the external metric and
    its cross-scale exponent; fills the summary's bridge panels."""
    per_variant = _load_all_dynamics(config)
    real_fits = _load_fits_file(config, REAL_VARIANT)
    report = _build_bridge_outputs(config, per_variant, real_fits)
    write_json(_bridge_path(config), report)

    summary_path = _summary_path(config)
    if summary_path.is_file():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
        summary["bridge_panels"] = {
            "rows": report["rows"],
            "external_exponents": report["external_exponents"],
            "metric_kind": report["metric_kind"],
        }
        write_json(summary_path, summary)
    log.info("bridge complete: %d correlation rows", len(report["rows"]))


# ---------------------------------------------------------------------------
# audit


def cmd_audit(config: RunConfig) -> None:
    """Recompute every fit/summary/bridge artifact from the dynamics files
    and verify the stored outputs byte for byte."""
    per_variant = _load_all_dynamics(config)
    for variant, records in per_variant.items():
        for r in records:
            if r.n_steps > 0:
                expected = r.s_max / (r.n_elements * r.n_steps)
                if r.v_rel is None or abs(r.v_rel - expected) > 1e-12:
                    raise DataError(
                        f"record invariant violated for {r.model_id}/{variant} "
                        f"step {r.step}: v_rel"
                    )
            elif not r.zero_cascade:
                raise DataError(
                    f"record invariant violated for {r.model_id}/{variant} "
                    f"step {r.step}: zero steps without zero_cascade flag"
                )

    fits_files, summary = _build_fit_outputs(config, per_variant)
    mismatches = []
    for variant, payload in fits_files.items():
        path = _fits_path(config, variant)
        if not path.is_file() or path.read_text(encoding="utf-8") != dump_json(payload):
            mismatches.append(str(path))

    bridge_path = _bridge_path(config)
    if bridge_path.is_file():
        real_fits = [
            StepScalingFit.from_dict(f)
            for f in fits_files[REAL_VARIANT]["fits"]
        ]
        report = _build_bridge_outputs(config, per_variant, real_fits)
        if bridge_path.read_text(encoding="utf-8") != dump_json(report):
            mismatches.append(str(bridge_path))
        summary["bridge_panels"] = {
            "rows": report["rows"],
            "external_exponents": report["external_exponents"],
            "metric_kind": report["metric_kind"],
        }

    summary_path = _summary_path(config)
    if not summary_path.is_file() or summary_path.read_text(
        encoding="utf-8"
    ) != dump_json(summary):
        mismatches.append(str(summary_path))

    if mismatches:
        raise DataError(
            "audit failed; stored outputs do not match recomputation: "
            + ", ".join(mismatches)
        )
    log.info("audit ok: outputs reproduce from dynamics files")
