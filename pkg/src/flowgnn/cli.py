"""Operator entry point: prepare, train, eval, embed.

Every command takes ``--manifest <json>`` naming the dataset CSV, schema
file, model and train config files, output directory, and one global seed;
individual fields can be overridden on the command line.  The global seed
fans out to fixed per-role streams (split, augmentation, parameter init,
sampling, shuffling, dropout), so a manifest pins an entire run.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FlowGnnError, SchemaError
from .graph import line_edge_count
from .ingest import FlowDataset, Schema, load_cache, prepare_dataset, save_cache
from .metrics import format_table
from .models import (VARIANTS, Model, build_model, load_checkpoint, save_checkpoint,
                     variant_of)
from .train import (ROLE_AUGMENT, ROLE_EVAL, ROLE_INIT, ROLE_SPLIT, TrainConfig,
                    build_graph, derive_seed, evaluate, run_training, training_labels)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


@dataclass
class RunManifest:
    dataset: Path
    schema: Path
    model_config: Path
    train_config: Path
    output_dir: Path
    seed: int = 0

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        base = Path(path).parent
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"manifest not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"manifest {path} is not valid JSON: {e}")
        missing = [k for k in ("dataset", "schema", "model_config", "train_config", "output_dir")
                   if k not in raw]
        if missing:
            raise ConfigError(f"manifest missing fields: {', '.join(missing)}")
        resolve = lambda p: (base / p).resolve() if not Path(p).is_absolute() else Path(p)
        return cls(dataset=resolve(raw["dataset"]), schema=resolve(raw["schema"]),
                   model_config=resolve(raw["model_config"]),
                   train_config=resolve(raw["train_config"]),
                   output_dir=resolve(raw["output_dir"]), seed=int(raw.get("seed", 0)))


def _load_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"{what} file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}")


def _model_settings(manifest: RunManifest, args) -> dict:
    cfg = _load_json(manifest.model_config, "model config")
    for key in ("variant", "layers", "heads"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if "variant" not in cfg:
        raise ConfigError("model config needs a 'variant'")
    if cfg["variant"] not in VARIANTS:
        raise ConfigError(
            f"unknown variant {cfg['variant']!r}; valid variants: {', '.join(VARIANTS)}")
    return cfg


def _train_settings(manifest: RunManifest, args) -> TrainConfig:
    cfg = _load_json(manifest.train_config, "train config")
    for key, attr in (("lr", "lr"), ("batch_size", "batch_size"),
                      ("sample_size", "sample_size"), ("hops", "hops"),
                      ("epochs", "epochs")):
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = value
    cfg.setdefault("seed", manifest.seed)
    known = {"batch_size", "epochs", "lr", "betas", "eps", "seed",
             "sample_size", "hops", "target", "inductive"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    if "betas" in cfg:
        cfg["betas"] = tuple(cfg["betas"])
    return TrainConfig(**cfg)


def _build_configured_model(manifest: RunManifest, args,
                            dataset: FlowDataset, config: TrainConfig) -> Model:
    settings = dict(_model_settings(manifest, args))
    variant = settings.pop("variant")
    settings.pop("seed", None)
    _, n_classes, _ = training_labels(dataset, config.target)
    return build_model(variant, dataset.n_features, n_classes,
                       seed=derive_seed(manifest.seed, ROLE_INIT), **settings)


def _cache_dir(manifest: RunManifest) -> Path:
    return manifest.output_dir / "cache"


# ---------------------------------------------------------------------------
# Commands


def cmd_prepare(manifest: RunManifest, args) -> int:
    schema = Schema.from_file(manifest.schema)
    dataset = prepare_dataset(manifest.dataset, schema,
                              seed=derive_seed(manifest.seed, ROLE_SPLIT))
    graph = build_graph(dataset, augment_seed=derive_seed(manifest.seed, ROLE_AUGMENT))
    degrees = graph.degrees()
    hist = np.bincount(degrees)
    stats = {
        "graph": {
            "n_src": graph.n_src, "n_dst": graph.n_dst, "n_edges": graph.n_edges,
            "degree_histogram": hist.tolist(),
            "line_edge_estimate": line_edge_count(graph),
        },
        "n_classes": dataset.n_classes,
        "class_names": dataset.class_names(),
        "seed": manifest.seed,
    }
    cache_path, sidecar_path = save_cache(_cache_dir(manifest), dataset, extra_sidecar=stats)
    print(f"prepared {dataset.n_records} flows, {dataset.n_features} features, "
          f"{dataset.n_classes} classes")
    print(f"cache:   {cache_path}")
    print(f"sidecar: {sidecar_path}")
    return EXIT_OK


def _load_prepared(manifest: RunManifest) -> FlowDataset:
    cache = _cache_dir(manifest)
    if not (cache / "cache.npz").exists():
        raise ConfigError(f"no prepared cache under {cache}; run 'prepare' first")
    return load_cache(cache)


def cmd_train(manifest: RunManifest, args) -> int:
    dataset = _load_prepared(manifest)
    config = _train_settings(manifest, args)
    model = _build_configured_model(manifest, args, dataset, config)
    graph = build_graph(dataset, augment_seed=derive_seed(manifest.seed, ROLE_AUGMENT))
    record = run_training(model, dataset, graph, config)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = manifest.output_dir / "checkpoint.npz"
    save_checkpoint(checkpoint, model)
    record.checkpoint = str(checkpoint)
    run_path = manifest.output_dir / "run_record.json"
    run_path.write_text(json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"trained {variant_of(model)} model: "
          f"{len(record.batch_losses)} batches, final loss {record.batch_losses[-1]:.4f}")
    print(f"checkpoint: {checkpoint}")
    print(f"run record: {run_path}")
    return EXIT_OK


def _split_ids(dataset: FlowDataset, name: str):
    try:
        return {"train": dataset.split.train, "validation": dataset.split.validation,
                "test": dataset.split.test}[name]
    except KeyError:
        raise ConfigError(f"unknown split {name!r}; use train, validation, or test")


def cmd_eval(manifest: RunManifest, args) -> int:
    dataset = _load_prepared(manifest)
    config = _train_settings(manifest, args)
    model = load_checkpoint(args.checkpoint or manifest.output_dir / "checkpoint.npz")
    if model.n_features != dataset.n_features:
        raise ConfigError(f"checkpoint expects {model.n_features} features, "
                          f"dataset has {dataset.n_features}")
    graph = build_graph(dataset, augment_seed=derive_seed(manifest.seed, ROLE_AUGMENT))
    ids = _split_ids(dataset, args.split)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    reports = {"binary": evaluate(model, dataset, graph, ids, "binary", config)}
    if model.n_classes == dataset.n_classes:
        reports["multi"] = evaluate(model, dataset, graph, ids, "multi", config)
    for mode, report in reports.items():
        out = manifest.output_dir / f"eval_{mode}.json"
        out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        print(f"[{mode}] weighted F1 {report.weighted_f1:.4f}, macro F1 {report.macro_f1:.4f}")
        print(format_table(report))
        print(f"report: {out}")
    return EXIT_OK


def cmd_embed(manifest: RunManifest, args) -> int:
    dataset = _load_prepared(manifest)
    config = _train_settings(manifest, args)
    model = load_checkpoint(args.checkpoint or manifest.output_dir / "checkpoint.npz")
    graph = build_graph(dataset, augment_seed=derive_seed(manifest.seed, ROLE_AUGMENT))
    ids = np.asarray(_split_ids(dataset, args.split), dtype=np.int64)
    manifest.output_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(args.output) if args.output else manifest.output_dir / f"embeddings_{args.split}.csv"

    from .train import _neighborhood  # shared batching logic
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["edge_id", "label"] + [f"e{i}" for i in range(model.embedding_dim)])
        for b in range(0, len(ids), config.batch_size):
            batch = ids[b:b + config.batch_size]
            neigh = _neighborhood(model, graph, batch, config,
                                  seed=derive_seed(config.seed, ROLE_EVAL, b), edge_mask=None)
            z = model.embed(dataset.features, graph, neigh, training=False)
            for row_id, label, row in zip(batch, dataset.labels[batch], z.values):
                writer.writerow([int(row_id), int(label)] + [repr(float(x)) for x in row])
    print(f"wrote {len(ids)} embeddings of width {model.embedding_dim} to {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgnn",
        description="Graph-based intrusion detection: prepare flows, train, evaluate, export.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--manifest", required=True, help="run manifest JSON")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")

    p_prepare = sub.add_parser("prepare", help="parse, normalize, split, and cache a flow CSV")
    common(p_prepare)

    p_train = sub.add_parser("train", help="train the configured model on the prepared cache")
    common(p_train)
    for p in (p_train,):
        p.add_argument("--variant", choices=VARIANTS, default=None)
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--heads", type=int, default=None)
        p.add_argument("--layers", type=int, default=None)
        p.add_argument("--sample-size", dest="sample_size", type=int, default=None)
        p.add_argument("--hops", type=int, default=None)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint (binary and multiclass)")
    common(p_eval)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p_eval.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p_eval.add_argument("--sample-size", dest="sample_size", type=int, default=None)
    p_eval.add_argument("--hops", type=int, default=None)

    p_embed = sub.add_parser("embed", help="export pre-classifier embeddings to CSV")
    common(p_embed)
    p_embed.add_argument("--checkpoint", default=None)
    p_embed.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p_embed.add_argument("--output", default=None)
    p_embed.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p_embed.add_argument("--sample-size", dest="sample_size", type=int, default=None)
    p_embed.add_argument("--hops", type=int, default=None)
    return parser


COMMANDS = {"prepare": cmd_prepare, "train": cmd_train, "eval": cmd_eval, "embed": cmd_embed}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_USAGE
    try:
        manifest = RunManifest.load(args.manifest)
        if args.seed is not None:
            manifest.seed = args.seed
        return COMMANDS[args.command](manifest, args)
    except (ConfigError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FlowGnnError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> int:
    return main()


if __name__ == "__main__":
    sys.exit(main())
