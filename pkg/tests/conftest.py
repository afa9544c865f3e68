import json
from pathlib import Path

import numpy as np
import pytest

from fsgt.graphs import GraphKey, ProbeGraph
from fsgt.reference import ReferenceGraph, random_reference_graph
from fsgt.snapshots import FieldSnapshot, SnapshotManifest

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def triangle() -> ProbeGraph:
    return ProbeGraph.from_edges(GraphKey(3, 2, 42), [(0, 1), (0, 2), (1, 2)])


@pytest.fixture
def triangle_ref() -> ReferenceGraph:
    return ReferenceGraph(3, ((0, 1), (0, 2), (1, 2)))


def make_manifest(
    n_elements: int,
    step: int = 0,
    family: str = "test",
    model_id: str = "m0",
    field_kind: str = "synthetic",
    seed: int | None = None,
) -> SnapshotManifest:
    return SnapshotManifest(
        family=family,
        model_id=model_id,
        field_kind=field_kind,
        step=step,
        n_elements=n_elements,
        seed=seed,
    )


def make_snapshot(values, step: int = 0, **kwargs) -> FieldSnapshot:
    values = np.asarray(values, dtype=np.float32)
    manifest = make_manifest(values.size, step=step, **kwargs)
    return FieldSnapshot(manifest=manifest, values=values)


def oracle_instances() -> list[dict]:
    raw = json.loads((DATA_DIR / "oracle_instances.json").read_text())
    return raw["instances"]


def instance_field(inst: dict) -> np.ndarray:
    """Deterministic random field for one committed oracle instance."""
    rng = np.random.default_rng(inst["field_seed"])
    n = inst["n"]
    if inst["field"] == "gaussian":
        vals = rng.standard_normal(n)
    elif inst["field"] == "lognormal_signed":
        vals = rng.lognormal(0.0, 1.0, n) * rng.choice([-1.0, 1.0], size=n)
    else:
        vals = rng.laplace(0.0, 1.0, n)
    return (vals * inst["field_scale"]).astype(np.float32)


def instance_graphs(inst: dict):
    """(ReferenceGraph, ProbeGraph) pair for one committed instance."""
    from fsgt.graphs import build_ba_graph

    if inst["kind"] == "ba":
        key = GraphKey(inst["n"], inst["m"], inst["graph_seed"])
        probe = build_ba_graph(key)
        edges = []
        for i in range(probe.n_nodes):
            for j in probe.neighbors[probe.offsets[i] : probe.offsets[i + 1]]:
                if i < int(j):
                    edges.append((i, int(j)))
        ref = ReferenceGraph(inst["n"], tuple(edges))
    else:
        ref = random_reference_graph(inst["n"], inst["extra_edges"], inst["graph_seed"])
        probe = ref.to_probe_graph()
    return ref, probe


def engine_active_sequence(values, probe, config, field_kind="synthetic", step=0):
    """Drive the engine's public primitives step by step, mirroring
    run_cascade, to extract its active-set sequence."""
    from fsgt.cascade import compute_active_set, relax_step, threshold_seed
    from fsgt.snapshots import field_quantile

    u = np.asarray(values, dtype=np.float64)
    tau = field_quantile(
        u, config.q_threshold, config.subsample_cap, threshold_seed(field_kind, step)
    )
    sequence = []
    steps = 0
    while True:
        active = compute_active_set(u, tau)
        if active.size == 0:
            break
        if steps == config.max_steps:
            break
        sequence.append(active.tolist())
        u = relax_step(u, active, probe, config.alpha)
        steps += 1
    return tau, sequence
