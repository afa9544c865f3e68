"""Naive reference implementations used by property and acceptance tests.

These deliberately avoid the engine's vectorized paths: plain Python loops
over explicit adjacency lists, and a hand-written order-statistics quantile.
They are the ground truth the optimized engine is checked against and are
not used anywhere in the pipeline itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cascade import CascadeConfig, CascadeResult
from .errors import DataError
from .graphs import GraphKey, ProbeGraph

_MAX_REFERENCE_NODES = 4096


@dataclass(frozen=True)
class ReferenceGraph:
    """Simple undirected graph held as an explicit edge list."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise DataError(f"self-loop on node {a}")
            if not (0 <= a < self.n_nodes and 0 <= b < self.n_nodes):
                raise DataError(f"edge ({a}, {b}) out of range")
            canon = (min(a, b), max(a, b))
            if canon in seen:
                raise DataError(f"duplicate edge {canon}")
            seen.add(canon)

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for lst in adj:
            lst.sort()
        return adj

    def to_probe_graph(self, key: GraphKey | None = None) -> ProbeGraph:
        """Lossless CSR conversion so the engine can run the same topology."""
        if key is None:
            key = GraphKey(n_nodes=self.n_nodes, m=1, seed=0)
        return ProbeGraph.from_edges(key, np.asarray(self.edges, dtype=np.int64))


def random_reference_graph(
    n_nodes: int, extra_edges: int, seed: int
) -> ReferenceGraph:
    """Arbitrary connected simple graph for oracle tests: a random spanning
    tree plus ``extra_edges`` distinct chords. Every node has degree >= 1."""
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes")
    rng = np.random.default_rng(seed)
    edges: set[tuple[int, int]] = set()
    for v in range(1, n_nodes):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    max_extra = n_nodes * (n_nodes - 1) // 2 - len(edges)
    budget = min(extra_edges, max_extra)
    while budget > 0:
        a = int(rng.integers(0, n_nodes))
        b = int(rng.integers(0, n_nodes))
        if a == b:
            continue
        edge = (min(a, b), max(a, b))
        if edge in edges:
            continue
        edges.add(edge)
        budget -= 1
    return ReferenceGraph(n_nodes=n_nodes, edges=tuple(sorted(edges)))


def reference_quantile(values, q: float) -> float:
    """Full-sort type-7 magnitude quantile, no subsampling."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")
    mags = np.sort(np.abs(np.asarray(values, dtype=np.float64).reshape(-1)))
    n = mags.size
    if n == 0:
        raise ValueError("empty input")
    h = (n - 1) * q
    lo = math.floor(h)
    g = h - lo
    if lo + 1 >= n:
        return float(mags[n - 1])
    return float(mags[lo] + g * (mags[lo + 1] - mags[lo]))


def reference_cascade(
    field,
    graph: ReferenceGraph,
    config: CascadeConfig = CascadeConfig(),
) -> tuple[CascadeResult, list[list[int]]]:
    """Literal loop transcription of the relaxation rule.

    Returns the result plus the full active-set sequence (one sorted id list
    per executed step) for exact comparison against the engine.
    """
    if graph.n_nodes > _MAX_REFERENCE_NODES:
        raise ValueError(
            f"reference cascade is unoptimized; N <= {_MAX_REFERENCE_NODES}"
        )
    u = [float(x) for x in np.asarray(field, dtype=np.float64).reshape(-1)]
    if len(u) != graph.n_nodes:
        raise DataError("field length does not match graph")

    adj = graph.adjacency()
    deg = [len(a) for a in adj]
    tau = reference_quantile(u, config.q_threshold)
    alpha = config.alpha

    sequence: list[list[int]] = []
    s_max = 0
    n_steps = 0
    ceiling_limited = False
    while True:
        active = [i for i in range(graph.n_nodes) if abs(u[i]) > tau]
        if not active:
            break
        if n_steps == config.max_steps:
            ceiling_limited = True
            break
        sequence.append(active)
        s_max += len(active)
        is_active = [False] * graph.n_nodes
        for i in active:
            is_active[i] = True
        new_u = [0.0] * graph.n_nodes
        for i in range(graph.n_nodes):
            tmp = u[i] - alpha * u[i] if is_active[i] else u[i]
            incoming = 0.0
            for r in adj[i]:  # ascending neighbor order
                if is_active[r]:
                    incoming += (alpha * u[r]) / deg[r]
            new_u[i] = tmp + incoming
        u = new_u
        n_steps += 1

    zero_cascade = n_steps == 0
    result = CascadeResult(
        tau=tau,
        s_max=s_max,
        n_steps=n_steps,
        ceiling_limited=ceiling_limited,
        zero_cascade=zero_cascade,
        activity_trace=[len(a) for a in sequence],
        v_abs=None if zero_cascade else s_max / n_steps,
        v_rel=None if zero_cascade else s_max / (graph.n_nodes * n_steps),
    )
    return result, sequence
