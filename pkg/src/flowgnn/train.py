"""Optimization loop: Adam updates, epoch iteration, and F1 evaluation.

The flow graph is built once over all records (transductive scope); losses
and metrics only ever touch the edges of the requested split.  A strict
inductive mode restricts neighbor visibility to train edges during
training instead.  Every random choice (shuffling, neighbor sampling,
dropout) derives from the config seed through ``derive_seed``, so a rerun
with the same config reproduces losses and metrics exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .errors import ConfigError
from .graph import Array, BipartiteGraph, augment_virtual_nodes, bipartite_from_arrays
from .ingest import FlowDataset, binary_labels
from .metrics import MetricsReport, report_from_labels
from .models import EdgeSageModel, Model
from .sampling import full_line_neighborhood, sample_khop

# per-dataset learning rates that worked best on the validation splits
LR_PRESETS = {
    "UNSW-NB15": 0.007,
    "CIC-DarkNet": 0.003,
    "CSE-CIC-IDS": 0.003,
    "ToN-IoT": 0.01,
}

# role tags for fanning one global seed out to independent streams
ROLE_SPLIT = 1
ROLE_AUGMENT = 2
ROLE_INIT = 3
ROLE_SAMPLING = 4
ROLE_SHUFFLE = 5
ROLE_DROPOUT = 6
ROLE_EVAL = 7


def derive_seed(*parts: int) -> int:
    """Stable derived seed for a (seed, role, ...) tuple."""
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


@dataclass
class TrainConfig:
    batch_size: int = 500
    epochs: int = 2
    lr: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    sample_size: int = 8
    hops: int = 2
    target: str = "multi"            # "multi" | "binary"
    inductive: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.target not in ("multi", "binary"):
            raise ConfigError(f"target must be 'multi' or 'binary', got {self.target!r}")


def adam_step(params: list[Parameter], lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """Bias-corrected moment update; zeroes gradients afterwards."""
    b1, b2 = betas
    for p in params:
        if p.grad is None:
            raise ValueError(f"parameter {p.name} has no gradient; run backward first")
        p.step_count += 1
        t = p.step_count
        p.moment1 = b1 * p.moment1 + (1 - b1) * p.grad
        p.moment2 = b2 * p.moment2 + (1 - b2) * p.grad ** 2
        m_hat = p.moment1 / (1 - b1 ** t)
        v_hat = p.moment2 / (1 - b2 ** t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


def build_graph(dataset: FlowDataset, augment_seed: int) -> BipartiteGraph:
    """Bipartite graph over all records, endpoint sets balanced by
    seeded virtual-node augmentation."""
    g = bipartite_from_arrays(dataset.src_keys, dataset.dst_keys, dataset.labels)
    return augment_virtual_nodes(g, augment_seed)


def training_labels(dataset: FlowDataset, target: str) -> tuple[Array, int, list[str]]:
    if target == "binary":
        return binary_labels(dataset.labels), 2, ["normal", "attack"]
    return dataset.labels, dataset.n_classes, dataset.class_names()


def _neighborhood(model: Model, graph: BipartiteGraph, batch: Array,
                  config: TrainConfig, seed: int, edge_mask: Array | None):
    if isinstance(model, EdgeSageModel):
        return sample_khop(graph, batch, hops=model.config.layers,
                           sample_size=config.sample_size, seed=seed,
                           edge_mask=edge_mask)
    return full_line_neighborhood(graph, batch, hops=config.hops, edge_mask=edge_mask)


def _train_mask(dataset: FlowDataset, config: TrainConfig) -> Array | None:
    if not config.inductive:
        return None
    mask = np.zeros(dataset.n_records, dtype=bool)
    mask[dataset.split.train] = True
    return mask


def train_epoch(model: Model, dataset: FlowDataset, graph: BipartiteGraph,
                config: TrainConfig, epoch: int = 0) -> tuple[list[float], list[float]]:
    """One pass over the shuffled train split; returns (losses, seconds)
    per batch."""
    train_ids = dataset.split.train
    if len(train_ids) == 0:
        raise ValueError("train split is empty")
    labels, _, _ = training_labels(dataset, config.target)
    shuffle_rng = np.random.default_rng(derive_seed(config.seed, ROLE_SHUFFLE, epoch))
    order = train_ids[shuffle_rng.permutation(len(train_ids))]
    dropout_rng = np.random.default_rng(derive_seed(config.seed, ROLE_DROPOUT, epoch))
    mask = _train_mask(dataset, config)
    losses: list[float] = []
    seconds: list[float] = []
    for b in range(0, len(order), config.batch_size):
        batch = order[b:b + config.batch_size]
        started = time.perf_counter()
        neigh = _neighborhood(model, graph, batch, config,
                              seed=derive_seed(config.seed, ROLE_SAMPLING, epoch, b), edge_mask=mask)
        logits = model.forward(dataset.features, graph, neigh,
                               training=True, rng=dropout_rng)
        loss = ad.cross_entropy(logits, labels[batch])
        ad.backward(loss)
        adam_step(model.parameters(), config.lr, config.betas, config.eps)
        seconds.append(time.perf_counter() - started)
        losses.append(loss.item())
        if not np.isfinite(losses[-1]):
            raise FloatingPointError(f"loss diverged at epoch {epoch}, batch {b}")
    return losses, seconds


def predict(model: Model, dataset: FlowDataset, graph: BipartiteGraph,
            split_ids: Array, config: TrainConfig) -> Array:
    """Evaluation-mode class predictions for the given edge ids."""
    preds = np.empty(len(split_ids), dtype=np.int64)
    for b in range(0, len(split_ids), config.batch_size):
        batch = np.asarray(split_ids[b:b + config.batch_size], dtype=np.int64)
        neigh = _neighborhood(model, graph, batch, config,
                              seed=derive_seed(config.seed, ROLE_EVAL, b), edge_mask=None)
        logits = model.forward(dataset.features, graph, neigh, training=False)
        preds[b:b + len(batch)] = logits.values.argmax(axis=1)
    return preds


def evaluate(model: Model, dataset: FlowDataset, graph: BipartiteGraph,
             split_ids: Array, mode: str, config: TrainConfig) -> MetricsReport:
    """Confusion matrix and the F1 family over one split.

    ``mode`` "binary" collapses to benign-vs-attack regardless of how many
    classes the model emits; "multi" requires the model's class count to
    match the dataset.
    """
    split_ids = np.asarray(split_ids, dtype=np.int64)
    preds = predict(model, dataset, graph, split_ids, config)
    truth = dataset.labels[split_ids]
    if mode == "binary":
        return report_from_labels(binary_labels(truth), binary_labels(preds), 2,
                                  ["normal", "attack"])
    if mode == "multi":
        if model.n_classes != dataset.n_classes:
            raise ConfigError(
                f"model emits {model.n_classes} classes, dataset has {dataset.n_classes}")
        return report_from_labels(truth, preds, dataset.n_classes, dataset.class_names())
    raise ConfigError(f"unknown evaluation mode {mode!r}")


@dataclass
class RunRecord:
    """Everything one training run produced, JSON-serializable."""

    train_config: dict
    model_config: dict
    batch_losses: list[float] = field(default_factory=list)
    batch_seconds: list[float] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {"train_config": self.train_config, "model_config": self.model_config,
                "batch_losses": self.batch_losses, "batch_seconds": self.batch_seconds,
                "metrics": self.metrics, "checkpoint": self.checkpoint}


def run_training(model: Model, dataset: FlowDataset, graph: BipartiteGraph,
                 config: TrainConfig, eval_splits: dict[str, Array] | None = None) -> RunRecord:
    """Train for the configured epochs, then evaluate.

    ``eval_splits`` maps names to edge-id arrays (defaults to the test
    split); each gets a binary report, plus a multiclass report when the
    model's class count matches the dataset.
    """
    record = RunRecord(train_config=_config_dict(config), model_config=model.config_dict())
    for epoch in range(config.epochs):
        losses, seconds = train_epoch(model, dataset, graph, config, epoch)
        record.batch_losses.extend(losses)
        record.batch_seconds.extend(seconds)
    if eval_splits is None:
        eval_splits = {"test": dataset.split.test}
    for name, ids in eval_splits.items():
        entry = {"binary": evaluate(model, dataset, graph, ids, "binary", config).to_dict()}
        if model.n_classes == dataset.n_classes:
            entry["multi"] = evaluate(model, dataset, graph, ids, "multi", config).to_dict()
        record.metrics[name] = entry
    return record


def _config_dict(config: TrainConfig) -> dict:
    return {"batch_size": config.batch_size, "epochs": config.epochs, "lr": config.lr,
            "betas": list(config.betas), "eps": config.eps, "seed": config.seed,
            "sample_size": config.sample_size, "hops": config.hops,
            "target": config.target, "inductive": config.inductive}
