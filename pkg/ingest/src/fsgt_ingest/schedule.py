"""Learning-rate schedule metadata emission.

The probe's bridge stage residualizes observables against the reconstructed
schedule eta(t); this module writes the schedule parameter JSON it consumes:
``{"kind", "eta_max", "eta_min", "t_warm", "t_total"}`` with kind one of
``linear_warmup_linear`` or ``linear_warmup_cosine``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import IngestConfigError

SCHEDULE_KINDS = ("linear_warmup_linear", "linear_warmup_cosine")


def build_schedule(
    kind: str,
    eta_max: float,
    eta_min: float,
    t_warm: int,
    t_total: int,
) -> dict:
    if kind not in SCHEDULE_KINDS:
        raise IngestConfigError(f"unknown schedule kind {kind!r}")
    if not 0 <= eta_min <= eta_max:
        raise IngestConfigError("need 0 <= eta_min <= eta_max")
    if t_warm <= 0:
        raise IngestConfigError("warmup must cover at least one step")
    if t_total <= t_warm:
        raise IngestConfigError("t_total must exceed t_warm")
    return {
        "kind": kind,
        "eta_max": float(eta_max),
        "eta_min": float(eta_min),
        "t_warm": int(t_warm),
        "t_total": int(t_total),
    }


def emit_schedule(schedule: dict, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(
        json.dumps(schedule, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out_path
