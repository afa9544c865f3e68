"""Redistribution-graph construction and caching.

The probe runs on a fixed Barabasi-Albert graph over the field's N entries,
stored as CSR adjacency (offsets + sorted neighbor lists). Builds are a pure
function of (n_nodes, m, seed): the seed graph is a complete clique on m+1
nodes and every later node attaches to m distinct existing nodes drawn
preferentially by degree from a repeated-endpoint list (duplicate draws
within one node are rejected and redrawn). The RNG is numpy's PCG64.

Graphs are cached on disk as ``ba_N<N>_m<m>_s<seed>.tdug``; a cache hit
returns arrays identical to a fresh build, and a corrupt or mismatched cache
file is rebuilt transparently.
"""

from __future__ import annotations

import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

_CACHE_MAGIC = b"TDUG"
_CACHE_VERSION = 1
# magic, version u32, N u64, m u32, seed u64, E u64 (little-endian)
_HEADER = struct.Struct("<4sIQIQQ")


@dataclass(frozen=True)
class GraphKey:
    n_nodes: int
    m: int
    seed: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ConfigError(f"attachment parameter m must be >= 1, got {self.m}")
        if self.n_nodes < self.m + 1:
            raise ConfigError(
                f"n_nodes must be >= m+1 ({self.m + 1}), got {self.n_nodes}"
            )
        if self.seed < 0:
            raise ConfigError("graph seed must be non-negative")

    def cache_name(self) -> str:
        return f"ba_N{self.n_nodes}_m{self.m}_s{self.seed}.tdug"


@dataclass
class ProbeGraph:
    """Immutable CSR adjacency. ``neighbors[offsets[i]:offsets[i+1]]`` lists
    node i's neighbors in ascending order."""

    key: GraphKey
    offsets: np.ndarray  # int64, length N+1
    neighbors: np.ndarray  # uint32, length 2E
    degrees: np.ndarray  # int64, length N

    # lazily built per-step gather helpers (treated as immutable caches)
    _halfedge_dst: np.ndarray | None = field(default=None, repr=False, compare=False)
    _deg_f64: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.uint32)
        self.degrees = np.ascontiguousarray(self.degrees, dtype=np.int64)
        for arr in (self.offsets, self.neighbors, self.degrees):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.offsets.size - 1)

    @property
    def n_edges(self) -> int:
        return int(self.neighbors.size // 2)

    def halfedge_dst(self) -> np.ndarray:
        """Destination node id of each CSR slot (node i repeated degree(i) times)."""
        if self._halfedge_dst is None:
            dst = np.repeat(
                np.arange(self.n_nodes, dtype=np.int64), self.degrees
            )
            dst.setflags(write=False)
            self._halfedge_dst = dst
        return self._halfedge_dst

    def degrees_f64(self) -> np.ndarray:
        if self._deg_f64 is None:
            deg = self.degrees.astype(np.float64)
            deg.setflags(write=False)
            self._deg_f64 = deg
        return self._deg_f64

    @classmethod
    def from_edges(cls, key: GraphKey, edges: np.ndarray) -> "ProbeGraph":
        """Build CSR from an (E, 2) array of undirected simple edges."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = key.n_nodes
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise DataError("edge endpoint out of range")
        if (edges[:, 0] == edges[:, 1]).any():
            raise DataError("self-loop in edge list")
        canon = np.sort(edges, axis=1)
        if len(np.unique(canon, axis=0)) != len(canon):
            raise DataError("duplicate edge in edge list")
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        degrees = np.bincount(src, minlength=n).astype(np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degrees, out=offsets[1:])
        return cls(
            key=key,
            offsets=offsets,
            neighbors=dst.astype(np.uint32),
            degrees=degrees,
        )

    def validate(self, check_connected: bool = False) -> None:
        n = self.n_nodes
        if self.degrees.size != n:
            raise DataError("degree array length mismatch")
        if not np.array_equal(np.diff(self.offsets), self.degrees):
            raise DataError("offsets inconsistent with degrees")
        if int(self.degrees.sum()) != self.neighbors.size:
            raise DataError("degree sum != number of adjacency slots")
        nbr = self.neighbors.astype(np.int64)
        if nbr.size and nbr.max() >= n:
            raise DataError("neighbor id out of range")
        dst = self.halfedge_dst()
        if (nbr == dst).any():
            raise DataError("self-loop in adjacency")
        for lo, hi in zip(self.offsets[:-1], self.offsets[1:]):
            seg = nbr[lo:hi]
            if seg.size > 1 and (np.diff(seg) <= 0).any():
                raise DataError("neighbor list not strictly ascending")
        # symmetry: the multiset of (src, dst) equals the multiset of (dst, src)
        fwd = dst * n + nbr
        rev = nbr * n + dst
        if not np.array_equal(np.sort(fwd), np.sort(rev)):
            raise DataError("adjacency not symmetric")
        if check_connected and not self.is_connected():
            raise DataError("graph is not connected")

    def is_connected(self) -> bool:
        n = self.n_nodes
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = np.array([0], dtype=np.int64)
        nbr = self.neighbors
        while frontier.size:
            starts = self.offsets[frontier]
            counts = self.degrees[frontier]
            total = int(counts.sum())
            if total == 0:
                break
            base = np.repeat(starts, counts)
            step = np.arange(total) - np.repeat(
                np.cumsum(counts) - counts, counts
            )
            reached = nbr[base + step].astype(np.int64)
            fresh = reached[~seen[reached]]
            if fresh.size == 0:
                break
            frontier = np.unique(fresh)
            seen[frontier] = True
        return bool(seen.all())


def build_ba_graph(key: GraphKey) -> ProbeGraph:
    """Deterministically grow the preferential-attachment graph for ``key``."""
    n, m, seed = key.n_nodes, key.m, key.seed
    m0 = m + 1
    n_edges = m0 * (m0 - 1) // 2 + m * (n - m0)
    edges = np.empty((n_edges, 2), dtype=np.int64)
    # Each stored edge contributes both endpoints to the attachment pool, so
    # sampling a uniform pool slot is sampling a node with probability
    # proportional to its current degree.
    endpoints = np.empty(2 * n_edges, dtype=np.int64)

    e = 0
    for i in range(m0):
        for j in range(i + 1, m0):
            edges[e, 0] = i
            edges[e, 1] = j
            endpoints[2 * e] = i
            endpoints[2 * e + 1] = j
            e += 1

    rng = np.random.default_rng(seed)
    for v in range(m0, n):
        pool_len = 2 * e
        chosen: list[int] = []
        while len(chosen) < m:
            draws = rng.integers(0, pool_len, size=m - len(chosen))
            for idx in draws:
                t = int(endpoints[idx])
                if t not in chosen:
                    chosen.append(t)
                    if len(chosen) == m:
                        break
        for t in chosen:
            edges[e, 0] = v
            edges[e, 1] = t
            endpoints[2 * e] = v
            endpoints[2 * e + 1] = t
            e += 1

    assert e == n_edges
    return ProbeGraph.from_edges(key, edges)


def _write_cache(graph: ProbeGraph, path: Path) -> None:
    header = _HEADER.pack(
        _CACHE_MAGIC,
        _CACHE_VERSION,
        graph.key.n_nodes,
        graph.key.m,
        graph.key.seed,
        graph.n_edges,
    )
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(graph.offsets.astype("<u8", copy=False).tobytes())
        fh.write(graph.neighbors.astype("<u4", copy=False).tobytes())
    os.replace(tmp, path)


def _read_cache(path: Path, key: GraphKey) -> ProbeGraph | None:
    """Return the cached graph, or None if the file is unusable."""
    try:
        blob = path.read_bytes()
        if len(blob) < _HEADER.size:
            raise ValueError("truncated header")
        magic, version, n, m, seed, n_edges = _HEADER.unpack_from(blob, 0)
        if magic != _CACHE_MAGIC or version != _CACHE_VERSION:
            raise ValueError("bad magic/version")
        if (n, m, seed) != (key.n_nodes, key.m, key.seed):
            raise ValueError(
                f"header (N={n}, m={m}, seed={seed}) does not match request"
            )
        off_bytes = (n + 1) * 8
        nbr_bytes = 2 * n_edges * 4
        if len(blob) != _HEADER.size + off_bytes + nbr_bytes:
            raise ValueError("payload length mismatch")
        offsets = np.frombuffer(blob, dtype="<u8", count=n + 1, offset=_HEADER.size)
        neighbors = np.frombuffer(
            blob, dtype="<u4", count=2 * n_edges, offset=_HEADER.size + off_bytes
        )
        offsets = offsets.astype(np.int64)
        if offsets[0] != 0 or offsets[-1] != 2 * n_edges:
            raise ValueError("offsets inconsistent with edge count")
        degrees = np.diff(offsets)
        if (degrees < 0).any():
            raise ValueError("negative degree")
        return ProbeGraph(
            key=key,
            offsets=offsets,
            neighbors=neighbors.astype(np.uint32),
            degrees=degrees.astype(np.int64),
        )
    except (OSError, ValueError) as exc:
        log.warning("graph cache %s unusable (%s); rebuilding", path, exc)
        return None


def get_or_build(key: GraphKey, cache_dir) -> ProbeGraph:
    """Load the graph for ``key`` from ``cache_dir``, building and persisting
    it on a miss. A hit returns a graph identical to a fresh build."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / key.cache_name()
    if path.exists():
        cached = _read_cache(path, key)
        if cached is not None:
            return cached
    graph = build_ba_graph(key)
    _write_cache(graph, path)
    return graph
