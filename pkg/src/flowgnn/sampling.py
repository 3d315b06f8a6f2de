"""Mini-batch neighborhood construction.

Two flavors: fixed-size uniform sampling on the bipartite graph (used by
the GraphSAGE-style models) and exact full expansion on the line graph
(used by the attention models).  Both are deterministic given a seed and
safe to run concurrently over an immutable graph.

Sampled flavor: starting from the batch, each expansion step draws, for
every endpoint of the current edge set, exactly ``sample_size`` incident
edges, uniformly: without replacement when the node has at least
``sample_size`` incident edges and with replacement otherwise.  Layer sets
grow outward, batch first.

Line flavor: hop expansion is exact and unsampled; when handed a bipartite
graph the line-graph adjacency is derived on the fly without materializing
the whole line graph.  The result carries the induced directed pair list
(neighbor u -> center v) with groups contiguous by center, ready for
attention, optionally including each center itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import GatherPlan
from .errors import CapacityError
from .graph import Array, BipartiteGraph, LineGraph, gather_csr, segment_pairs

DEFAULT_NODE_CAP = 2_000_000


def _masked_incidence(g: BipartiteGraph, edge_mask: Array | None) -> tuple[Array, Array]:
    indptr, order = g.incidence()
    if edge_mask is None:
        return indptr, order
    keep = edge_mask[order]
    counts = np.zeros(g.n_nodes, dtype=np.int64)
    np.add.at(counts, np.repeat(np.arange(g.n_nodes), np.diff(indptr))[keep], 1)
    new_indptr = np.zeros(g.n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=new_indptr[1:])
    return new_indptr, order[keep]


@dataclass
class EdgeBatchNeighborhood:
    """Layered edge sets plus per-node neighbor samples for each hop.

    ``layer_edges[0]`` is the batch itself and ``layer_edges[h]`` the set
    after h expansion steps (each a superset of the previous, sorted).
    ``hop_nodes[k]`` / ``hop_samples[k]`` (k = 1..hops) hold the frontier
    node codes and their (n, sample_size) sampled edge-id matrices for the
    aggregation layer that consumes hop k; hop ``hops`` is drawn first,
    directly from the batch.
    """

    batch: Array
    hops: int
    sample_size: int
    layer_edges: list[Array]
    hop_nodes: dict[int, Array]
    hop_samples: dict[int, Array]

    def sample_rows(self, k: int, codes: Array) -> Array:
        """Sampled edge-id matrix rows for the given node codes at hop k."""
        nodes = self.hop_nodes[k]
        pos = np.searchsorted(nodes, codes)
        if np.any(pos >= len(nodes)) or np.any(nodes[np.minimum(pos, len(nodes) - 1)] != codes):
            raise ValueError("node has no sample at this hop")
        return self.hop_samples[k][pos]


def _draw_samples(rng: np.random.Generator, indptr: Array, order: Array,
                  nodes: Array, sample_size: int) -> Array:
    """(len(nodes), sample_size) uniform incident-edge draws per node."""
    starts = indptr[nodes]
    degrees = indptr[nodes + 1] - starts
    if np.any(degrees == 0):
        bad = nodes[degrees == 0][0]
        raise ValueError(f"node code {bad} has no incident edges to sample")
    out = np.empty((len(nodes), sample_size), dtype=np.int64)
    # process distinct degrees ascending so the draw order is reproducible
    for d in np.unique(degrees):
        rows = np.flatnonzero(degrees == d)
        if d < sample_size:
            # every incident edge once, then uniform padding with replacement,
            # so a covering sample size always reproduces the full expansion
            pad = rng.integers(0, d, size=(len(rows), sample_size - d))
            draws = np.hstack([np.tile(np.arange(d), (len(rows), 1)), pad])
        else:
            keys = rng.random((len(rows), int(d)))
            draws = np.argpartition(keys, sample_size - 1, axis=1)[:, :sample_size]
        out[rows] = order[starts[rows][:, None] + draws]
    return out


def sample_khop(g: BipartiteGraph, batch, hops: int, sample_size: int, seed: int,
                edge_mask: Array | None = None) -> EdgeBatchNeighborhood:
    """Uniform fixed-size neighborhood sampling around an edge batch.

    ``edge_mask`` restricts which edges may be drawn as neighbors (the
    batch itself is never filtered); used for strict-inductive training.
    The widest layer is hard-capped at |batch| * (1 + 2*sample_size)^hops,
    the worst case when every draw hits a distinct edge.
    """
    batch = np.asarray(batch, dtype=np.int64)
    if hops < 1 or sample_size < 1 or len(batch) == 0:
        raise ValueError("need hops >= 1, sample_size >= 1, non-empty batch")
    if batch.min() < 0 or batch.max() >= g.n_edges:
        raise ValueError(f"batch edge index out of range [0, {g.n_edges})")
    indptr, order = _masked_incidence(g, edge_mask)
    rng = np.random.default_rng(seed)
    work_cap = len(batch) * (1 + 2 * sample_size) ** hops

    current = np.unique(batch)
    layer_edges = [current]
    hop_nodes: dict[int, Array] = {}
    hop_samples: dict[int, Array] = {}
    for k in range(hops, 0, -1):
        nodes = np.unique(np.concatenate([g.edge_src_code[current], g.edge_dst_code[current]]))
        samples = _draw_samples(rng, indptr, order, nodes, sample_size)
        hop_nodes[k] = nodes
        hop_samples[k] = samples
        current = np.union1d(current, samples.reshape(-1))
        layer_edges.append(current)
    assert len(layer_edges[-1]) <= work_cap, "sampled neighborhood exceeded its work bound"
    return EdgeBatchNeighborhood(
        batch=batch, hops=hops, sample_size=sample_size,
        layer_edges=layer_edges, hop_nodes=hop_nodes, hop_samples=hop_samples,
    )


# ---------------------------------------------------------------------------
# Full line-graph neighborhoods


@dataclass
class LineBatchNeighborhood:
    """Exact hop expansion on the line graph, with induced attention pairs.

    ``nodes`` lists the member line-node (edge) ids sorted ascending; pair
    arrays use local positions into ``nodes`` and are grouped contiguously
    by center node v (``indptr``), every center owning at least one pair
    when self-inclusion is on.
    """

    batch: Array
    hops: int
    nodes: Array
    batch_local: Array
    pair_u: Array
    pair_v: Array
    indptr: Array
    layers: list[Array]
    include_self: bool = True
    _plans: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def neighbor_positions(self, local_v: int) -> Array:
        return self.pair_u[self.indptr[local_v]:self.indptr[local_v + 1]]

    def pair_u_plan(self) -> "GatherPlan":
        if "u" not in self._plans:
            self._plans["u"] = GatherPlan(self.pair_u)
        return self._plans["u"]

    def pair_v_plan(self) -> "GatherPlan":
        if "v" not in self._plans:
            self._plans["v"] = GatherPlan(self.pair_v)
        return self._plans["v"]


def _line_frontier_bipartite(g: BipartiteGraph, members: Array,
                             indptr: Array, order: Array) -> Array:
    codes = np.unique(np.concatenate([g.edge_src_code[members], g.edge_dst_code[members]]))
    neighbors, _ = gather_csr(indptr, order, codes)
    return np.union1d(members, neighbors)


def _line_frontier_linegraph(lg: LineGraph, members: Array) -> Array:
    neighbors, _ = gather_csr(lg.indptr, lg.neighbors, members)
    return np.union1d(members, neighbors)


def _induced_pairs_bipartite(g: BipartiteGraph, members: Array,
                             indptr: Array, order: Array) -> tuple[Array, Array]:
    """Directed (u, v) line adjacency restricted to ``members`` (local ids)."""
    member_mask = np.zeros(g.n_edges, dtype=bool)
    member_mask[members] = True
    codes = np.unique(np.concatenate([g.edge_src_code[members], g.edge_dst_code[members]]))
    inc, counts = gather_csr(indptr, order, codes)
    keep = member_mask[inc]
    inc = inc[keep]
    sizes = np.zeros(len(codes), dtype=np.int64)
    np.add.at(sizes, np.repeat(np.arange(len(codes)), counts)[keep], 1)
    u, v = segment_pairs(inc, sizes)
    sel = u != v
    u, v = u[sel], v[sel]
    lu = np.searchsorted(members, u)
    lv = np.searchsorted(members, v)
    n = len(members)
    key = np.unique(lv * n + lu)
    return key % n, key // n


def _induced_pairs_linegraph(lg: LineGraph, members: Array) -> tuple[Array, Array]:
    member_mask = np.zeros(lg.n_nodes, dtype=bool)
    member_mask[members] = True
    nbrs, counts = gather_csr(lg.indptr, lg.neighbors, members)
    owners = np.repeat(members, counts)
    keep = member_mask[nbrs]
    u = np.searchsorted(members, nbrs[keep])
    v = np.searchsorted(members, owners[keep])
    return u, v


def full_line_neighborhood(graph: BipartiteGraph | LineGraph, batch, hops: int,
                           include_self: bool = True,
                           node_cap: int = DEFAULT_NODE_CAP,
                           edge_mask: Array | None = None) -> LineBatchNeighborhood:
    """Exact (unsampled) hop expansion of a line-node batch.

    ``graph`` may be the materialized line graph or the bipartite graph, in
    which case adjacency is derived on the fly.  ``edge_mask`` restricts
    membership to allowed line nodes (batch always included).
    """
    batch = np.asarray(batch, dtype=np.int64)
    if hops < 1 or len(batch) == 0:
        raise ValueError("need hops >= 1 and a non-empty batch")
    n_line = graph.n_edges if isinstance(graph, BipartiteGraph) else graph.n_nodes
    if batch.min() < 0 or batch.max() >= n_line:
        raise ValueError(f"batch line-node index out of range [0, {n_line})")

    bip = isinstance(graph, BipartiteGraph)
    if bip:
        indptr, order = graph.incidence()
    members = np.unique(batch)
    layers = [members]
    for _ in range(hops):
        members = (_line_frontier_bipartite(graph, members, indptr, order) if bip
                   else _line_frontier_linegraph(graph, members))
        if edge_mask is not None:
            allowed = edge_mask[members]
            members = np.union1d(members[allowed], batch)
        if len(members) > node_cap:
            raise CapacityError(
                f"line neighborhood grew to {len(members)} nodes, above the cap of {node_cap}")
        layers.append(members)

    pair_u, pair_v = (_induced_pairs_bipartite(graph, members, indptr, order) if bip
                      else _induced_pairs_linegraph(graph, members))
    n = len(members)
    if include_self:
        self_ids = np.arange(n, dtype=np.int64)
        pair_u = np.concatenate([pair_u, self_ids])
        pair_v = np.concatenate([pair_v, self_ids])
    order_pairs = np.lexsort((pair_u, pair_v))
    pair_u = pair_u[order_pairs]
    pair_v = pair_v[order_pairs]
    indptr_groups = np.searchsorted(pair_v, np.arange(n + 1))
    return LineBatchNeighborhood(
        batch=batch, hops=hops, nodes=members,
        batch_local=np.searchsorted(members, batch),
        pair_u=pair_u, pair_v=pair_v, indptr=indptr_groups,
        layers=layers, include_self=include_self,
    )
