"""Graph-based network intrusion detection.

Flows become edges of a bipartite endpoint graph (or nodes of its line
graph), and four models classify them: GraphSAGE-style aggregation with and
without a raw-feature residual embedding, and multi-head line-graph
attention with and without per-layer residual feature blocks.  Training,
metrics, and a minimal reverse-mode tensor engine are all self-contained.
"""

from .autodiff import Parameter, RowGroups, Tensor, backward, grad_check
from .graph import (BipartiteGraph, LineGraph, augment_virtual_nodes, build_bipartite,
                    build_line_graph, line_edge_count)
from .ingest import (DatasetSplit, FlowDataset, FlowRecord, Normalizer, Schema,
                     binary_labels, encode_labels, fit_apply_normalizer, parse_flows,
                     prepare_dataset, split_dataset)
from .metrics import MetricsReport, confusion_matrix, f1_scores, format_table
from .models import (GatConfig, SageConfig, build_model, edge_embedding,
                     load_checkpoint, resgat_layer, sage_layer, save_checkpoint)
from .sampling import full_line_neighborhood, sample_khop
from .train import TrainConfig, adam_step, build_graph, evaluate, run_training, train_epoch

__version__ = "0.1.0"

__all__ = [
    "Parameter", "RowGroups", "Tensor", "backward", "grad_check",
    "BipartiteGraph", "LineGraph", "augment_virtual_nodes", "build_bipartite",
    "build_line_graph", "line_edge_count",
    "DatasetSplit", "FlowDataset", "FlowRecord", "Normalizer", "Schema",
    "binary_labels", "encode_labels", "fit_apply_normalizer", "parse_flows",
    "prepare_dataset", "split_dataset",
    "MetricsReport", "confusion_matrix", "f1_scores", "format_table",
    "GatConfig", "SageConfig", "build_model", "edge_embedding",
    "load_checkpoint", "resgat_layer", "sage_layer", "save_checkpoint",
    "full_line_neighborhood", "sample_khop",
    "TrainConfig", "adam_step", "build_graph", "evaluate", "run_training", "train_epoch",
]
