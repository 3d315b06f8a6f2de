"""Bipartite flow graphs, virtual-node augmentation, and line graphs.

Source and destination nodes live in separate dense id spaces.  For
neighborhood work both sides share a single "code" space: source i has code
i, destination j has code n_src + j.  Incidence (node code -> edge ids) is
stored CSR-style and built lazily.

The line graph has one node per original edge; two line nodes are adjacent
iff their edges share at least one endpoint.  Parallel edges sharing both
endpoints are adjacent once (adjacency is a set).  The edge count of the
line graph of a simple bipartite graph equals the sum over all nodes of
d*(d-1)/2.

Optional on-disk cache layout (little-endian, written by ``save_graph``):
magic ``FGNN`` (4 bytes), version uint32 (=1), n_src, n_dst, n_edges,
aug_seed-plus-one (uint64 each; 0 means never augmented), then edge_src and
edge_dst and labels as int64[n_edges] arrays in that order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CapacityError
from .ingest import FlowRecord

Array = np.ndarray

DEFAULT_LINE_EDGE_CAP = 50_000_000

_MAGIC = b"FGNN"
_VERSION = 1


def _csr_from_targets(targets: Array, n_targets: int) -> tuple[Array, Array]:
    """CSR over targets: (indptr, order) with order[indptr[t]:indptr[t+1]]
    listing the positions whose target is t, ascending."""
    counts = np.bincount(targets, minlength=n_targets)
    indptr = np.zeros(n_targets + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    order = np.argsort(targets, kind="stable").astype(np.int64)
    return indptr, order


def gather_csr(indptr: Array, order: Array, targets: Array) -> tuple[Array, Array]:
    """Concatenate CSR segments for ``targets``; returns (values, counts)."""
    starts = indptr[targets]
    counts = (indptr[targets + 1] - starts).astype(np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=order.dtype), counts
    ends = np.cumsum(counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    return order[np.repeat(starts, counts) + within], counts


@dataclass
class BipartiteGraph:
    """Immutable bipartite multigraph of flows.

    ``feature_index[e]`` points at the flow record carrying edge e's
    features; construction order keeps it equal to ``arange(n_edges)``.
    """

    n_src: int
    n_dst: int
    edge_src: Array                 # (E,) source ids in [0, n_src)
    edge_dst: Array                 # (E,) destination ids in [0, n_dst)
    labels: Array                   # (E,) int labels
    feature_index: Array            # (E,) record index per edge
    src_keys: list[str] | None = None
    dst_keys: list[str] | None = None
    aug_seed: int | None = None     # set once virtual-node augmentation ran
    _incidence: tuple[Array, Array] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.edge_src = np.asarray(self.edge_src, dtype=np.int64)
        self.edge_dst = np.asarray(self.edge_dst, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.feature_index = np.asarray(self.feature_index, dtype=np.int64)
        if self.n_edges:
            if self.edge_src.min() < 0 or self.edge_src.max() >= self.n_src:
                raise ValueError("edge source id out of range")
            if self.edge_dst.min() < 0 or self.edge_dst.max() >= self.n_dst:
                raise ValueError("edge destination id out of range")

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)

    @property
    def n_nodes(self) -> int:
        return self.n_src + self.n_dst

    def src_code(self, src_ids: Array) -> Array:
        return np.asarray(src_ids, dtype=np.int64)

    def dst_code(self, dst_ids: Array) -> Array:
        return np.asarray(dst_ids, dtype=np.int64) + self.n_src

    @property
    def edge_src_code(self) -> Array:
        return self.edge_src

    @property
    def edge_dst_code(self) -> Array:
        return self.edge_dst + self.n_src

    def incidence(self) -> tuple[Array, Array]:
        """(indptr, edge_order) over node codes; built once, then shared."""
        if self._incidence is None:
            codes = np.concatenate([self.edge_src_code, self.edge_dst_code])
            positions = np.concatenate([np.arange(self.n_edges), np.arange(self.n_edges)])
            indptr, order = _csr_from_targets(codes, self.n_nodes)
            self._incidence = (indptr, positions[order].astype(np.int64))
        return self._incidence

    def incident_edges(self, code: int) -> Array:
        indptr, order = self.incidence()
        return order[indptr[code]:indptr[code + 1]]

    def degrees(self) -> Array:
        """Degree per node code (sources then destinations)."""
        src_deg = np.bincount(self.edge_src, minlength=self.n_src)
        dst_deg = np.bincount(self.edge_dst, minlength=self.n_dst)
        return np.concatenate([src_deg, dst_deg]).astype(np.int64)


def build_bipartite(records: list[FlowRecord]) -> BipartiteGraph:
    """One edge per record in input order; node ids assigned densely in
    order of first appearance."""
    if not records:
        raise ValueError("cannot build a graph from zero records")
    src_keys = np.asarray([r.src_key for r in records])
    dst_keys = np.asarray([r.dst_key for r in records])
    labels = np.asarray([int(r.label) for r in records], dtype=np.int64)
    return bipartite_from_arrays(src_keys, dst_keys, labels)


def bipartite_from_arrays(src_keys: Array, dst_keys: Array, labels: Array) -> BipartiteGraph:
    src_names, edge_src = _dense_ids(src_keys)
    dst_names, edge_dst = _dense_ids(dst_keys)
    return BipartiteGraph(
        n_src=len(src_names), n_dst=len(dst_names),
        edge_src=edge_src, edge_dst=edge_dst,
        labels=np.asarray(labels, dtype=np.int64),
        feature_index=np.arange(len(src_keys), dtype=np.int64),
        src_keys=list(src_names), dst_keys=list(dst_names),
    )


def _dense_ids(keys: Array) -> tuple[list[str], Array]:
    """Dense ids in order of first appearance."""
    uniq, first_pos, inverse = np.unique(keys, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first_pos))
    ids = rank[inverse].astype(np.int64)
    names = [""] * len(uniq)
    for u, r in zip(uniq, rank):
        names[r] = str(u)
    return names, ids


def augment_virtual_nodes(g: BipartiteGraph, seed: int) -> BipartiteGraph:
    """Pad the smaller endpoint set with virtual nodes until both sides
    match, then redraw that side's endpoint of every edge uniformly over the
    padded set.  Edge count, features, and labels are untouched; the padded
    side's mean degree can only drop.  Returns ``g`` itself when the sides
    already match.
    """
    if g.n_src == g.n_dst:
        return g
    rng = np.random.default_rng(seed)
    if g.n_src < g.n_dst:
        n_src = g.n_dst
        edge_src = rng.integers(0, n_src, size=g.n_edges, dtype=np.int64)
        edge_dst = g.edge_dst.copy()
        n_dst = g.n_dst
        src_keys = _padded_keys(g.src_keys, g.n_src, n_src)
        dst_keys = list(g.dst_keys) if g.dst_keys is not None else None
    else:
        n_dst = g.n_src
        edge_dst = rng.integers(0, n_dst, size=g.n_edges, dtype=np.int64)
        edge_src = g.edge_src.copy()
        n_src = g.n_src
        dst_keys = _padded_keys(g.dst_keys, g.n_dst, n_dst)
        src_keys = list(g.src_keys) if g.src_keys is not None else None
    return BipartiteGraph(
        n_src=n_src, n_dst=n_dst, edge_src=edge_src, edge_dst=edge_dst,
        labels=g.labels.copy(), feature_index=g.feature_index.copy(),
        src_keys=src_keys, dst_keys=dst_keys, aug_seed=seed,
    )


def _padded_keys(keys: list[str] | None, old: int, new: int) -> list[str] | None:
    if keys is None:
        return None
    return list(keys) + [f"virtual:{i}" for i in range(new - old)]


@dataclass
class LineGraph:
    """Nodes are the original edges; node i carries edge i's features and label."""

    n_nodes: int
    indptr: Array                  # (n_nodes + 1,)
    neighbors: Array               # concatenated sorted neighbor lists
    labels: Array
    feature_index: Array

    @property
    def n_edges(self) -> int:
        return len(self.neighbors) // 2

    def neighbor_list(self, node: int) -> Array:
        return self.neighbors[self.indptr[node]:self.indptr[node + 1]]

    def degrees(self) -> Array:
        return np.diff(self.indptr)


def line_edge_count(g: BipartiteGraph) -> int:
    """Sum over all nodes of d*(d-1)/2; equals the line graph's edge count
    when no two edges share both endpoints."""
    d = g.degrees().astype(np.int64)
    return int(((d - 1) * d // 2).sum())


def segment_pairs(values: Array, sizes: Array) -> tuple[Array, Array]:
    """All ordered within-segment pairs of a concatenated segment array.

    ``values`` holds segments back to back, segment i spanning ``sizes[i]``
    entries.  Returns (u, v) listing every ordered pair (including u == v
    positions) within each segment; fully vectorized.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    pair_counts = sizes * sizes
    total = int(pair_counts.sum())
    if total == 0:
        return np.empty(0, dtype=values.dtype), np.empty(0, dtype=values.dtype)
    seg_offsets = np.cumsum(sizes) - sizes
    pair_offsets = np.cumsum(pair_counts) - pair_counts
    within = np.arange(total, dtype=np.int64) - np.repeat(pair_offsets, pair_counts)
    m_rep = np.repeat(sizes, pair_counts)
    base = np.repeat(seg_offsets, pair_counts)
    return values[base + within // m_rep], values[base + within % m_rep]


def _adjacency_pairs(g: BipartiteGraph) -> tuple[Array, Array]:
    """Deduplicated directed line-graph pairs (u, v), u != v, sorted by (v, u)."""
    indptr, order = g.incidence()
    counts = np.diff(indptr)
    u, v = segment_pairs(order, counts)
    keep = u != v
    u, v = u[keep], v[keep]
    if len(u):
        key = np.unique(v * g.n_edges + u)
        u = key % g.n_edges
        v = key // g.n_edges
    return u, v


def build_line_graph(g: BipartiteGraph, edge_cap: int = DEFAULT_LINE_EDGE_CAP) -> LineGraph:
    """Materialize the full line graph.

    The predicted edge count (degree formula) is checked against
    ``edge_cap`` before any allocation; prefer per-batch neighborhoods when
    the prediction is large.
    """
    predicted = line_edge_count(g)
    if predicted > edge_cap:
        raise CapacityError(
            f"line graph would hold ~{predicted} edges, above the cap of {edge_cap}")
    u, v = _adjacency_pairs(g)
    indptr = np.zeros(g.n_edges + 1, dtype=np.int64)
    np.cumsum(np.bincount(v, minlength=g.n_edges), out=indptr[1:])
    return LineGraph(
        n_nodes=g.n_edges,
        indptr=indptr,
        neighbors=u,
        labels=g.labels.copy(),
        feature_index=g.feature_index.copy(),
    )


# ---------------------------------------------------------------------------
# Disk cache


def save_graph(path: str | Path, g: BipartiteGraph) -> None:
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        aug = 0 if g.aug_seed is None else g.aug_seed + 1
        fh.write(struct.pack("<QQQQ", g.n_src, g.n_dst, g.n_edges, aug))
        fh.write(g.edge_src.astype("<i8").tobytes())
        fh.write(g.edge_dst.astype("<i8").tobytes())
        fh.write(g.labels.astype("<i8").tobytes())


def load_graph(path: str | Path) -> BipartiteGraph:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path} is not a graph cache")
    version, = struct.unpack("<I", raw[4:8])
    if version != _VERSION:
        raise ValueError(f"unsupported graph cache version {version}")
    n_src, n_dst, n_edges, aug = struct.unpack("<QQQQ", raw[8:40])
    body = np.frombuffer(raw[40:], dtype="<i8")
    if len(body) != 3 * n_edges:
        raise ValueError("graph cache is truncated")
    return BipartiteGraph(
        n_src=int(n_src), n_dst=int(n_dst),
        edge_src=body[:n_edges].copy(),
        edge_dst=body[n_edges:2 * n_edges].copy(),
        labels=body[2 * n_edges:].copy(),
        feature_index=np.arange(n_edges, dtype=np.int64),
        aug_seed=None if aug == 0 else int(aug - 1),
    )
