"""Thresholded synchronous redistribution cascades on a probe graph.

Given a signed field snapshot, the probe fixes a threshold tau at the Q90
magnitude of the initial field, then iterates a synchronous relaxation: every
node whose magnitude exceeds tau sheds a fraction alpha of its signed value,
split equally over its graph neighbors (alpha * u_r / k_r each), while all
reads come from the previous step's buffer. The loop stops when the active
set empties or a step ceiling is hit. The driving snapshot is never mutated.

Determinism contract: per-node incoming sums accumulate in ascending
neighbor order in float64, so results are independent of worker-thread
count and agree bit-for-bit with the naive reference implementation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import CascadeNumericsError, ConfigError, DataError
from .graphs import ProbeGraph
from .snapshots import DEFAULT_SUBSAMPLE_CAP, FieldSnapshot, field_quantile


@dataclass(frozen=True)
class CascadeConfig:
    alpha: float = 0.3
    q_threshold: float = 0.90
    max_steps: int = 500
    record_trace: bool = False
    subsample_cap: int = DEFAULT_SUBSAMPLE_CAP

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.q_threshold < 1.0:
            raise ConfigError(
                f"q_threshold must lie in (0, 1), got {self.q_threshold}"
            )
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.subsample_cap < 1:
            raise ConfigError("subsample_cap must be >= 1")


@dataclass(frozen=True)
class CascadeResult:
    """Per-snapshot probe output.

    ``s_max`` counts every activation event over all executed steps;
    ``n_steps`` counts executed relaxation steps. ``v_abs``/``v_rel`` are
    None for zero cascades (no step executed).
    """

    tau: float
    s_max: int
    n_steps: int
    ceiling_limited: bool
    zero_cascade: bool
    activity_trace: list[int] | None
    v_abs: float | None
    v_rel: float | None


def threshold_seed(field_kind: str, step: int) -> int:
    """Deterministic subsample seed so real and null fields at one
    checkpoint draw independent but reproducible quantile subsamples."""
    digest = hashlib.sha256(f"{field_kind}:{step}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def compute_active_set(field, tau: float) -> np.ndarray:
    """Indices with |u_i| > tau (strict; ties at tau stay inactive)."""
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    u = np.asarray(field, dtype=np.float64)
    return np.flatnonzero(np.abs(u) > tau)


def _as_mask(active, n: int) -> np.ndarray:
    active = np.asarray(active)
    if active.dtype == bool:
        if active.size != n:
            raise DataError("active mask length mismatch")
        return active
    mask = np.zeros(n, dtype=bool)
    mask[active.astype(np.int64, copy=False)] = True
    return mask


def _relax(u: np.ndarray, mask: np.ndarray, graph: ProbeGraph, alpha: float) -> np.ndarray:
    # Shed alpha*u_r from each active r; neighbors each gain alpha*u_r/k_r.
    # All reads come from u (previous state); incoming sums accumulate in
    # CSR order, i.e. ascending neighbor id per node.
    share = np.where(mask, (alpha * u) / graph.degrees_f64(), 0.0)
    incoming = np.bincount(
        graph.halfedge_dst(),
        weights=share[graph.neighbors],
        minlength=u.size,
    )
    decayed = np.where(mask, u - alpha * u, u)
    return decayed + incoming


def relax_step(field, active, graph: ProbeGraph, alpha: float) -> np.ndarray:
    """One synchronous redistribution step; ``active`` is a node-id array or
    boolean mask over the graph's nodes."""
    u = np.asarray(field, dtype=np.float64)
    if u.size != graph.n_nodes:
        raise DataError(
            f"field length {u.size} != graph nodes {graph.n_nodes}"
        )
    return _relax(u, _as_mask(active, u.size), graph, alpha)


def run_cascade(
    snapshot: FieldSnapshot,
    graph: ProbeGraph,
    config: CascadeConfig = CascadeConfig(),
) -> CascadeResult:
    """Run the full threshold-redistribution cascade for one snapshot."""
    manifest = snapshot.manifest
    if manifest.n_elements != graph.n_nodes:
        raise DataError(
            f"snapshot N={manifest.n_elements} does not match graph "
            f"N={graph.n_nodes}"
        )
    u = snapshot.values.astype(np.float64)
    tau = field_quantile(
        u,
        config.q_threshold,
        subsample_cap=config.subsample_cap,
        seed=threshold_seed(manifest.field_kind, manifest.step),
    )

    trace: list[int] = []
    s_max = 0
    n_steps = 0
    ceiling_limited = False
    while True:
        mask = np.abs(u) > tau
        n_active = int(mask.sum())
        if n_active == 0:
            break
        if n_steps == config.max_steps:
            ceiling_limited = True
            break
        trace.append(n_active)
        s_max += n_active
        u = _relax(u, mask, graph, config.alpha)
        n_steps += 1
        if not np.isfinite(u).all():
            bad = int(np.flatnonzero(~np.isfinite(u))[0])
            raise CascadeNumericsError(
                f"non-finite value at node {bad} after step {n_steps} "
                f"(model {manifest.model_id}, step {manifest.step})"
            )

    zero_cascade = n_steps == 0
    v_abs = None if zero_cascade else s_max / n_steps
    v_rel = None if zero_cascade else s_max / (manifest.n_elements * n_steps)
    return CascadeResult(
        tau=tau,
        s_max=s_max,
        n_steps=n_steps,
        ceiling_limited=ceiling_limited,
        zero_cascade=zero_cascade,
        activity_trace=trace if config.record_trace else None,
        v_abs=v_abs,
        v_rel=v_rel,
    )
