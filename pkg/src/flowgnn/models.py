"""The four edge-classification architectures.

Two families share the codebase:

* GraphSAGE-style models run on the bipartite graph.  Node states start as
  all-ones vectors (one slot per edge feature), and each layer feeds every
  node the mean of its freshly sampled incident edges' raw features,
  concatenated with the node's previous state, through a weight matrix and
  ReLU.  An edge is then represented by the concatenation of its endpoint
  states; the "modified" variant appends the edge's own raw features to
  that embedding so they reach the classifier undiluted.

* Attention models run on the line graph, where classifying an edge is
  classifying a node.  Each layer computes multi-head attention over the
  induced neighborhood (self included by default), with per-head ELU and
  head concatenation.  The residual variant appends the node's raw input
  features, identity-mapped, to every layer's output; the vanilla variant
  omits the residual block and averages heads at the final layer.

A single affine map over the final embedding produces class logits; the
softmax lives inside the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, RowGroups, Tensor
from .errors import ConfigError
from .graph import Array, BipartiteGraph
from .sampling import EdgeBatchNeighborhood, LineBatchNeighborhood

LEAKY_SLOPE = 0.2
ELU_ALPHA = 1.0

VARIANTS = ("egraphsage", "egraphsage_modified", "gat", "eresgat")


@dataclass
class SageConfig:
    layers: int = 2
    hidden: int = 128
    aggregator: str = "mean"
    variant: str = "original"        # "original" | "modified"

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ConfigError(f"invalid sage config: layers={self.layers}, hidden={self.hidden}")
        if self.aggregator != "mean":
            raise ConfigError(f"unsupported aggregator {self.aggregator!r} (only 'mean')")
        if self.variant not in ("original", "modified"):
            raise ConfigError(f"unknown sage variant {self.variant!r}")


@dataclass
class GatConfig:
    layers: int = 3
    heads: int = 6
    head_dim: int = 16
    residual: bool = False
    attn_dropout: float = 0.0

    def __post_init__(self):
        if self.layers < 1 or self.heads < 1 or self.head_dim < 1:
            raise ConfigError(f"invalid attention config: {self}")
        if not 0.0 <= self.attn_dropout < 1.0:
            raise ConfigError(f"attention dropout must be in [0, 1), got {self.attn_dropout}")


# ---------------------------------------------------------------------------
# Layers


def sage_layer(node_states: Tensor, edge_states: Tensor, sample_matrix: Array,
               w: Parameter) -> Tensor:
    """One aggregation layer: mean of each node's sampled incident edge
    states, concatenated with its previous state, affine, ReLU."""
    sample_matrix = np.asarray(sample_matrix, dtype=np.int64)
    if sample_matrix.ndim != 2 or sample_matrix.shape[1] == 0:
        raise ValueError("each node needs a non-empty sampled neighborhood")
    if sample_matrix.shape[0] != node_states.shape[0]:
        raise ValueError(
            f"{node_states.shape[0]} node states but {sample_matrix.shape[0]} sample rows")
    groups = RowGroups.rectangular(sample_matrix, edge_states.shape[0])
    aggregated = ad.row_mean_groups(edge_states, groups)
    return ad.relu(ad.affine(ad.concat_cols([node_states, aggregated]), w))


def edge_embedding(h_u: Tensor, h_v: Tensor, raw_edges: Tensor | None,
                   variant: str) -> Tensor:
    """Edge representation from endpoint states; the modified variant
    appends the raw edge features."""
    if variant == "original":
        return ad.concat_cols([h_u, h_v])
    if variant == "modified":
        if raw_edges is None:
            raise ValueError("modified embedding needs the raw edge features")
        return ad.concat_cols([h_u, h_v, raw_edges])
    raise ValueError(f"unknown embedding variant {variant!r}")


def attention_scores(states: Tensor, pair_u: Array, pair_v: Array,
                     w_m: Parameter, a_m: Parameter,
                     groups: RowGroups) -> tuple[Tensor, Tensor]:
    """Normalized attention coefficients for directed pairs grouped by center.

    The score vector splits into halves acting on the projected neighbor and
    center states, so each node's two partial scores are computed once and
    gathered per pair instead of concatenating pair rows.

    Returns (alpha, projected_u): the per-pair coefficient column and the
    projected neighbor-state rows, reused by the weighted aggregation.
    """
    hd = w_m.shape[1]
    projected = ad.affine(states, w_m)
    score_u = ad.affine(projected, ad.slice_rows(a_m, 0, hd))
    score_v = ad.affine(projected, ad.slice_rows(a_m, hd, 2 * hd))
    logits = ad.add(ad.take_rows(score_u, pair_u), ad.take_rows(score_v, pair_v))
    alpha = ad.masked_softmax_rows(ad.leaky_relu(logits, slope=LEAKY_SLOPE), groups)
    pu = ad.take_rows(projected, pair_u)
    return alpha, pu


@dataclass
class LayerPairs:
    """Attention pair wiring for one aggregation layer.

    ``out_nodes`` / ``prev_nodes`` hold member positions (into the
    neighborhood's node list) whose states the layer emits and consumes;
    ``pair_prev`` / ``pair_center`` reference rows of the previous layer's
    state matrix, grouped contiguously by output node.  Restricting each
    layer to the nodes the batch actually depends on keeps the tape small
    without changing the batch rows' values.
    """

    out_nodes: Array
    prev_nodes: Array
    pair_prev: ad.GatherPlan
    pair_center: ad.GatherPlan
    groups: RowGroups

    @property
    def n_out(self) -> int:
        return len(self.out_nodes)


def line_layer_plans(neighborhood: LineBatchNeighborhood, n_layers: int) -> list[LayerPairs]:
    """Per-layer pair wiring, pruned to the batch's dependency cone.

    The final layer outputs only the batch nodes; each earlier layer
    outputs exactly the nodes the following layer aggregates over (plus the
    centers themselves, whose states score the attention logits).
    """
    pair_u, indptr = neighborhood.pair_u, neighborhood.indptr
    needed: list[Array] = [np.empty(0, dtype=np.int64)] * (n_layers + 1)
    selections: list[Array] = [np.empty(0, dtype=np.int64)] * (n_layers + 1)
    needed[n_layers] = np.unique(neighborhood.batch_local)
    for k in range(n_layers, 0, -1):
        selections[k] = _pairs_of(indptr, needed[k])
        needed[k - 1] = np.union1d(pair_u[selections[k]], needed[k])
    plans: list[LayerPairs] = []
    for k in range(1, n_layers + 1):
        sel = selections[k]
        u = pair_u[sel]
        prev = needed[k - 1]
        counts = indptr[needed[k] + 1] - indptr[needed[k]]
        group_indptr = np.zeros(len(needed[k]) + 1, dtype=np.int64)
        np.cumsum(counts, out=group_indptr[1:])
        centers = np.repeat(needed[k], counts)
        plans.append(LayerPairs(
            out_nodes=needed[k],
            prev_nodes=prev,
            pair_prev=ad.GatherPlan(np.searchsorted(prev, u)),
            pair_center=ad.GatherPlan(np.searchsorted(prev, centers)),
            groups=RowGroups.contiguous(group_indptr, len(u)),
        ))
    return plans


def _pairs_of(indptr: Array, centers: Array) -> Array:
    """Positions of all pairs whose center is in ``centers`` (sorted)."""
    starts = indptr[centers]
    counts = indptr[centers + 1] - starts
    total = int(counts.sum())
    ends = np.cumsum(counts)
    within = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    return np.repeat(starts, counts) + within


def plan_full(neighborhood: LineBatchNeighborhood) -> LayerPairs:
    """A single-layer plan covering every member node (no pruning)."""
    n = neighborhood.n_nodes
    all_nodes = np.arange(n, dtype=np.int64)
    return LayerPairs(
        out_nodes=all_nodes,
        prev_nodes=all_nodes,
        pair_prev=neighborhood.pair_u_plan(),
        pair_center=neighborhood.pair_v_plan(),
        groups=RowGroups.contiguous(neighborhood.indptr, len(neighborhood.pair_u)),
    )


def resgat_layer(states: Tensor, raw_features: Tensor | None,
                 neighborhood: LineBatchNeighborhood | LayerPairs,
                 head_params: list[tuple[Parameter, Parameter]],
                 residual: bool,
                 average_heads: bool = False,
                 dropout_rate: float = 0.0,
                 training: bool = False,
                 rng: np.random.Generator | None = None,
                 attn_audit: list | None = None) -> Tensor:
    """Multi-head attention aggregation over an induced line neighborhood.

    Per head: ELU of the attention-weighted sum of projected neighbor
    states.  Heads concatenate (or average when ``average_heads``); with
    ``residual`` the raw node features of the output rows are appended
    unchanged.  ``states`` holds rows for the plan's input nodes.
    """
    plan = neighborhood if isinstance(neighborhood, LayerPairs) else plan_full(neighborhood)
    if states.shape[0] != len(plan.prev_nodes):
        raise ValueError(
            f"{states.shape[0]} state rows but the layer consumes {len(plan.prev_nodes)} nodes")
    if residual and raw_features is None:
        raise ValueError("residual layer needs the raw node features")
    heads = []
    for w_m, a_m in head_params:
        alpha, pu = attention_scores(states, plan.pair_prev, plan.pair_center,
                                     w_m, a_m, plan.groups)
        if attn_audit is not None:
            sums = np.add.reduceat(alpha.values[:, 0], plan.groups.indptr[:-1])
            attn_audit.append(float(np.abs(sums - 1.0).max()))
        alpha = ad.dropout_coeffs(alpha, dropout_rate, training, rng)
        summed = ad.row_sum_groups(ad.scale_rows(pu, alpha), plan.groups)
        heads.append(ad.elu(summed, alpha=ELU_ALPHA))
    combined = ad.mean_tensors(heads) if average_heads else ad.concat_cols(heads)
    if residual:
        combined = ad.concat_cols([combined, raw_features])
    return combined


# ---------------------------------------------------------------------------
# Models


class EdgeSageModel:
    """GraphSAGE-style edge classifier over the bipartite flow graph."""

    kind = "sage"

    def __init__(self, config: SageConfig, n_features: int, n_classes: int, seed: int):
        self.config = config
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        d, h = n_features, config.hidden
        self.layer_weights: list[Parameter] = []
        in_dim = 2 * d
        for k in range(1, config.layers + 1):
            self.layer_weights.append(
                Parameter(f"sage.w{k}", ad.glorot_uniform(rng, in_dim, h)))
            in_dim = h + d
        embed_dim = 2 * h + (d if config.variant == "modified" else 0)
        self.classifier = Parameter("cls.w", ad.glorot_uniform(rng, embed_dim, n_classes))

    def parameters(self) -> list[Parameter]:
        return [*self.layer_weights, self.classifier]

    @property
    def embedding_dim(self) -> int:
        return self.classifier.shape[0]

    def _endpoint_states(self, features: Array, graph: BipartiteGraph,
                         neighborhood: EdgeBatchNeighborhood) -> tuple[Tensor, Array]:
        if not isinstance(neighborhood, EdgeBatchNeighborhood):
            raise ConfigError("sage models need sampled bipartite neighborhoods")
        if neighborhood.hops != self.config.layers:
            raise ConfigError(
                f"neighborhood has {neighborhood.hops} hops, model has {self.config.layers} layers")
        batch = neighborhood.batch
        codes = np.unique(np.concatenate([graph.edge_src_code[batch],
                                          graph.edge_dst_code[batch]]))
        feats = ad.constant(features)
        h = ad.constant(np.ones((len(codes), self.n_features)))
        for k in range(1, self.config.layers + 1):
            samples = neighborhood.sample_rows(k, codes)
            h = sage_layer(h, feats, samples, self.layer_weights[k - 1])
        return h, codes

    def embed(self, features: Array, graph: BipartiteGraph,
              neighborhood: EdgeBatchNeighborhood, *, training: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
        h, codes = self._endpoint_states(features, graph, neighborhood)
        batch = neighborhood.batch
        u_pos = np.searchsorted(codes, graph.edge_src_code[batch])
        v_pos = np.searchsorted(codes, graph.edge_dst_code[batch])
        h_u = ad.take_rows(h, u_pos)
        h_v = ad.take_rows(h, v_pos)
        raw = None
        if self.config.variant == "modified":
            raw = ad.take_rows(ad.constant(features), batch)
        return edge_embedding(h_u, h_v, raw, self.config.variant)

    def forward(self, features: Array, graph: BipartiteGraph,
                neighborhood: EdgeBatchNeighborhood, *, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        return ad.affine(self.embed(features, graph, neighborhood,
                                    training=training, rng=rng), self.classifier)

    def config_dict(self) -> dict:
        return {"kind": self.kind, "variant": self.config.variant,
                "layers": self.config.layers, "hidden": self.config.hidden,
                "aggregator": self.config.aggregator,
                "n_features": self.n_features, "n_classes": self.n_classes,
                "seed": self.seed}


class LineGatModel:
    """Attention edge classifier over the line graph; optionally residual."""

    kind = "gat"

    def __init__(self, config: GatConfig, n_features: int, n_classes: int, seed: int):
        self.config = config
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        self.attn_audit: list | None = None
        rng = np.random.default_rng(seed)
        d, hd, m = n_features, config.head_dim, config.heads
        self.head_params: list[list[tuple[Parameter, Parameter]]] = []
        in_dim = d
        for k in range(1, config.layers + 1):
            layer = []
            for head in range(m):
                w = Parameter(f"gat.l{k}.h{head}.w", ad.glorot_uniform(rng, in_dim, hd))
                a = Parameter(f"gat.l{k}.h{head}.a",
                              ad.glorot_uniform(rng, 2 * hd, 1, shape=(2 * hd, 1)))
                layer.append((w, a))
            self.head_params.append(layer)
            in_dim = m * hd + (d if config.residual else 0)
        if config.residual:
            embed_dim = m * hd + d
        else:
            embed_dim = hd  # final layer averages heads
        self.classifier = Parameter("cls.w", ad.glorot_uniform(rng, embed_dim, n_classes))

    def parameters(self) -> list[Parameter]:
        out: list[Parameter] = []
        for layer in self.head_params:
            for w, a in layer:
                out.extend([w, a])
        out.append(self.classifier)
        return out

    @property
    def embedding_dim(self) -> int:
        return self.classifier.shape[0]

    def _final_states(self, features: Array, neighborhood: LineBatchNeighborhood,
                      training: bool, rng: np.random.Generator | None) -> tuple[Tensor, Array]:
        if not isinstance(neighborhood, LineBatchNeighborhood):
            raise ConfigError("attention models need full line-graph neighborhoods")
        k_last = self.config.layers
        plans = line_layer_plans(neighborhood, k_last)
        h = ad.constant(features[neighborhood.nodes[plans[0].prev_nodes]])
        for k, plan in enumerate(plans, start=1):
            raw = None
            if self.config.residual:
                raw = ad.constant(features[neighborhood.nodes[plan.out_nodes]])
            h = resgat_layer(
                h, raw, plan,
                self.head_params[k - 1],
                residual=self.config.residual,
                average_heads=(not self.config.residual and k == k_last),
                dropout_rate=self.config.attn_dropout,
                training=training, rng=rng,
                attn_audit=self.attn_audit,
            )
        return h, plans[-1].out_nodes

    def embed(self, features: Array, graph, neighborhood: LineBatchNeighborhood, *,
              training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        h, out_nodes = self._final_states(features, neighborhood, training, rng)
        return ad.take_rows(h, np.searchsorted(out_nodes, neighborhood.batch_local))

    def forward(self, features: Array, graph, neighborhood: LineBatchNeighborhood, *,
                training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        return ad.affine(self.embed(features, graph, neighborhood,
                                    training=training, rng=rng), self.classifier)

    def config_dict(self) -> dict:
        return {"kind": self.kind, "residual": self.config.residual,
                "layers": self.config.layers, "heads": self.config.heads,
                "head_dim": self.config.head_dim, "attn_dropout": self.config.attn_dropout,
                "n_features": self.n_features, "n_classes": self.n_classes,
                "seed": self.seed}


Model = EdgeSageModel | LineGatModel


def build_model(variant: str, n_features: int, n_classes: int, seed: int,
                **overrides) -> Model:
    """Construct a model by variant name; unknown keys raise."""
    if variant == "egraphsage":
        cfg = SageConfig(variant="original", **_pick(overrides, "layers", "hidden", "aggregator"))
        return EdgeSageModel(cfg, n_features, n_classes, seed)
    if variant == "egraphsage_modified":
        cfg = SageConfig(variant="modified", **_pick(overrides, "layers", "hidden", "aggregator"))
        return EdgeSageModel(cfg, n_features, n_classes, seed)
    if variant == "gat":
        cfg = GatConfig(residual=False,
                        **_pick(overrides, "layers", "heads", "head_dim", "attn_dropout"))
        return LineGatModel(cfg, n_features, n_classes, seed)
    if variant == "eresgat":
        cfg = GatConfig(residual=True,
                        **_pick(overrides, "layers", "heads", "head_dim", "attn_dropout"))
        return LineGatModel(cfg, n_features, n_classes, seed)
    raise ConfigError(f"unknown variant {variant!r}; valid variants: {', '.join(VARIANTS)}")


def _pick(overrides: dict, *keys: str) -> dict:
    unknown = set(overrides) - set(keys)
    if unknown:
        raise ConfigError(f"unsupported options {sorted(unknown)} for this variant")
    return {k: v for k, v in overrides.items() if k in keys and v is not None}


def variant_of(model: Model) -> str:
    if isinstance(model, EdgeSageModel):
        return "egraphsage_modified" if model.config.variant == "modified" else "egraphsage"
    return "eresgat" if model.config.residual else "gat"


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(path: str | Path, model: Model) -> None:
    """Atomic write of a named-matrix container (npz) plus a config echo."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    arrays = {p.name: p.values for p in model.parameters()}
    arrays["__config__"] = np.frombuffer(
        json.dumps(model.config_dict(), sort_keys=True).encode(), dtype=np.uint8)
    with tmp.open("wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Model:
    data = np.load(Path(path), allow_pickle=False)
    cfg = json.loads(bytes(data["__config__"]).decode())
    kind = cfg.pop("kind")
    n_features = cfg.pop("n_features")
    n_classes = cfg.pop("n_classes")
    seed = cfg.pop("seed")
    if kind == "sage":
        model: Model = EdgeSageModel(SageConfig(**cfg), n_features, n_classes, seed)
    elif kind == "gat":
        model = LineGatModel(GatConfig(**cfg), n_features, n_classes, seed)
    else:
        raise ConfigError(f"unknown checkpoint kind {kind!r}")
    for p in model.parameters():
        if p.name not in data:
            raise ConfigError(f"checkpoint {path} is missing parameter {p.name}")
        stored = data[p.name]
        if stored.shape != p.values.shape:
            raise ConfigError(
                f"parameter {p.name}: checkpoint shape {stored.shape} vs model {p.values.shape}")
        p.values[...] = stored
    return model
