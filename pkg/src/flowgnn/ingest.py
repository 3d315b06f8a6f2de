"""Flow CSV ingestion: parsing, feature normalization, label encoding, splits.

A schema file (``key=value`` lines, ``#`` comments) maps CSV columns to
roles.  Recognized keys: ``src_ip``, ``dst_ip`` (required), ``src_port``,
``dst_port`` (optional), ``label`` (required), ``drop`` (comma-separated
columns to ignore), ``categorical`` (comma-separated non-numeric feature
columns to one-hot encode), ``normal_label`` (explicit name of the benign
class).  Every remaining column is a numeric feature.

Endpoint keys are prefixed ``S:`` / ``D:`` so the source and destination
namespaces never collide even when an address appears on both sides.

The prepared dataset is cached as ``cache.npz`` (features, labels, endpoint
keys) next to a ``sidecar.json`` holding the label map, normalizer
statistics, split indices, seed, and graph statistics; see ``save_cache``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, RowError, SchemaError

ONE_HOT_CAP = 32  # most-frequent categorical values kept; the rest bucket to "other"
NORMAL_NAMES = ("normal", "benign")


@dataclass
class FlowRecord:
    """One network flow: endpoint keys, numeric features, class label.

    ``label`` is the raw string after parsing and a class index once
    ``encode_labels`` has run.
    """

    src_key: str
    dst_key: str
    features: np.ndarray
    label: int | str


@dataclass
class Schema:
    src_ip: str
    dst_ip: str
    label: str
    src_port: str | None = None
    dst_port: str | None = None
    drop: list[str] = field(default_factory=list)
    categorical: list[str] = field(default_factory=list)
    normal_label: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "Schema":
        pairs: dict[str, str] = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise SchemaError(f"schema line is not key=value: {line!r}")
            key, value = line.split("=", 1)
            pairs[key.strip()] = value.strip()
        missing = [k for k in ("src_ip", "dst_ip", "label") if k not in pairs]
        if missing:
            raise SchemaError(f"schema missing required keys: {', '.join(missing)}")
        split_list = lambda s: [c.strip() for c in s.split(",") if c.strip()]
        return cls(
            src_ip=pairs["src_ip"],
            dst_ip=pairs["dst_ip"],
            label=pairs["label"],
            src_port=pairs.get("src_port") or None,
            dst_port=pairs.get("dst_port") or None,
            drop=split_list(pairs.get("drop", "")),
            categorical=split_list(pairs.get("categorical", "")),
            normal_label=pairs.get("normal_label") or None,
        )


def _endpoint_key(prefix: str, ip: str, port: str | None) -> str:
    return f"{prefix}:{ip}:{port}" if port is not None else f"{prefix}:{ip}"


def parse_flows(path: str | Path, schema: Schema) -> tuple[list[FlowRecord], list[str]]:
    """Parse a flow CSV into records; returns (records, feature_names).

    Numeric feature cells that fail to parse raise ``RowError`` with the
    1-based file line number.  Categorical columns named in the schema are
    one-hot encoded against the ``ONE_HOT_CAP`` most frequent values seen in
    the whole file (ties broken by value), with an ``=other`` bucket when
    the cap is exceeded.  Row order is preserved.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} has no header row")
        header = [h.strip() for h in header]
        rows = [(line_no, row) for line_no, row in enumerate(reader, start=2) if row]
    if not rows:
        raise EmptyDatasetError(f"{path} has no data rows")

    col_index = {name: i for i, name in enumerate(header)}
    role_cols = [schema.src_ip, schema.dst_ip, schema.label]
    if schema.src_port:
        role_cols.append(schema.src_port)
    if schema.dst_port:
        role_cols.append(schema.dst_port)
    for col in role_cols + schema.drop + schema.categorical:
        if col not in col_index:
            raise SchemaError(f"column {col!r} not in CSV header of {path}")

    reserved = set(role_cols) | set(schema.drop)
    feature_cols = [c for c in header if c not in reserved and c not in schema.categorical]
    cat_cols = [c for c in schema.categorical if c not in reserved]

    # categorical vocabulary: most frequent first, value order breaking ties
    vocab: dict[str, list[str]] = {}
    overflow: dict[str, bool] = {}
    for col in cat_cols:
        i = col_index[col]
        counts: dict[str, int] = {}
        for _, row in rows:
            v = row[i].strip()
            counts[v] = counts.get(v, 0) + 1
        ranked = sorted(counts, key=lambda v: (-counts[v], v))
        vocab[col] = ranked[:ONE_HOT_CAP]
        overflow[col] = len(ranked) > ONE_HOT_CAP

    feature_names = list(feature_cols)
    for col in cat_cols:
        feature_names.extend(f"{col}={v}" for v in vocab[col])
        if overflow[col]:
            feature_names.append(f"{col}=other")

    records: list[FlowRecord] = []
    for line_no, row in rows:
        if len(row) != len(header):
            raise RowError(line_no, f"expected {len(header)} cells, got {len(row)}")
        feats = np.zeros(len(feature_names), dtype=np.float64)
        for j, col in enumerate(feature_cols):
            cell = row[col_index[col]].strip()
            try:
                feats[j] = float(cell)
            except ValueError:
                raise RowError(line_no, f"column {col!r}: non-numeric value {cell!r}")
        offset = len(feature_cols)
        for col in cat_cols:
            v = row[col_index[col]].strip()
            values = vocab[col]
            pos = values.index(v) if v in values else len(values)
            feats[offset + pos] = 1.0
            offset += len(values) + (1 if overflow[col] else 0)
        src = _endpoint_key("S", row[col_index[schema.src_ip]].strip(),
                            row[col_index[schema.src_port]].strip() if schema.src_port else None)
        dst = _endpoint_key("D", row[col_index[schema.dst_ip]].strip(),
                            row[col_index[schema.dst_port]].strip() if schema.dst_port else None)
        if src == "S:" or dst == "D:":
            raise RowError(line_no, "empty endpoint key")
        records.append(FlowRecord(src, dst, feats, row[col_index[schema.label]].strip()))
    return records, feature_names


# ---------------------------------------------------------------------------
# Normalization


@dataclass
class Normalizer:
    """Per-feature min-max scaler fitted on the training split only.

    Maps x to (x - min) / (max - min); degenerate columns (max == min) map
    to 0.  Values outside the fitted range scale past [0, 1] unclamped.
    """

    mins: np.ndarray
    maxs: np.ndarray
    fitted: bool = True

    @classmethod
    def fit(cls, features: np.ndarray) -> "Normalizer":
        if features.shape[0] == 0:
            raise ValueError("cannot fit a normalizer on an empty training split")
        return cls(mins=features.min(axis=0), maxs=features.max(axis=0))

    @property
    def spans(self) -> np.ndarray:
        return self.maxs - self.mins

    def transform(self, features: np.ndarray) -> np.ndarray:
        spans = self.spans
        safe = np.where(spans > 0, spans, 1.0)
        out = (features - self.mins) / safe
        return np.where(spans > 0, out, 0.0)

    def inverse_transform(self, features: np.ndarray) -> np.ndarray:
        """Recovers raw values for non-degenerate columns; degenerate ones
        return the fitted constant."""
        spans = self.spans
        return np.where(spans > 0, features * spans + self.mins, self.mins)


def fit_apply_normalizer(records: list[FlowRecord],
                         train_idx) -> tuple[Normalizer, list[FlowRecord]]:
    """Fit min-max statistics on the training rows and rescale every record."""
    train_idx = np.asarray(train_idx, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("training index list is empty")
    train = np.stack([records[i].features for i in train_idx])
    norm = Normalizer.fit(train)
    out = [FlowRecord(r.src_key, r.dst_key, norm.transform(r.features), r.label)
           for r in records]
    return norm, out


# ---------------------------------------------------------------------------
# Labels


def encode_labels(records: list[FlowRecord],
                  normal_label: str | None = None) -> tuple[dict[str, int], list[FlowRecord]]:
    """Index classes 0..C-1 with the benign class pinned to 0.

    The benign class is ``normal_label`` when given, otherwise the unique
    label matching a known benign name case-insensitively.  Remaining
    classes are sorted lexicographically.
    """
    if not records:
        raise EmptyDatasetError("no records to encode")
    names = sorted({str(r.label) for r in records})
    if normal_label is not None:
        if normal_label not in names:
            raise SchemaError(f"normal label {normal_label!r} absent from data labels {names}")
        normal = normal_label
    else:
        candidates = [n for n in names if n.lower() in NORMAL_NAMES]
        if len(candidates) != 1:
            raise SchemaError(
                f"cannot identify the benign class among {names}; set normal_label in the schema")
        normal = candidates[0]
    ordered = [normal] + [n for n in names if n != normal]
    label_map = {name: i for i, name in enumerate(ordered)}
    encoded = [FlowRecord(r.src_key, r.dst_key, r.features, label_map[str(r.label)])
               for r in records]
    return label_map, encoded


def binary_labels(labels) -> np.ndarray:
    """Collapse class indices to 0 (benign) vs 1 (any attack)."""
    return (np.asarray(labels, dtype=np.int64) != 0).astype(np.int64)


# ---------------------------------------------------------------------------
# Splitting


@dataclass
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "validation": self.validation.tolist(),
                "test": self.test.tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(np.asarray(d["train"], dtype=np.int64),
                   np.asarray(d["validation"], dtype=np.int64),
                   np.asarray(d["test"], dtype=np.int64), int(d["seed"]))


def split_dataset(n: int, seed: int) -> DatasetSplit:
    """Seeded shuffle, then a 50/20/30 train/validation/test partition."""
    if n < 10:
        raise ValueError(f"need at least 10 records to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(n * 0.5 + 0.5)
    n_val = int(n * 0.2 + 0.5)
    return DatasetSplit(train=perm[:n_train],
                        validation=perm[n_train:n_train + n_val],
                        test=perm[n_train + n_val:],
                        seed=seed)


# ---------------------------------------------------------------------------
# Prepared dataset and cache


@dataclass
class FlowDataset:
    """Parsed, encoded, normalized flows plus the split that produced them."""

    features: np.ndarray          # (n, d) normalized
    labels: np.ndarray            # (n,) class indices
    src_keys: np.ndarray          # (n,) endpoint key strings
    dst_keys: np.ndarray
    feature_names: list[str]
    label_map: dict[str, int]
    normalizer: Normalizer
    split: DatasetSplit

    @property
    def n_records(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.label_map)

    def class_names(self) -> list[str]:
        inv = {i: name for name, i in self.label_map.items()}
        return [inv[i] for i in range(self.n_classes)]


def prepare_dataset(csv_path: str | Path, schema: Schema, seed: int) -> FlowDataset:
    """Full ingestion pipeline: parse, encode labels, split, normalize on train."""
    records, feature_names = parse_flows(csv_path, schema)
    label_map, records = encode_labels(records, schema.normal_label)
    split = split_dataset(len(records), seed)
    normalizer, records = fit_apply_normalizer(records, split.train)
    return FlowDataset(
        features=np.stack([r.features for r in records]),
        labels=np.asarray([r.label for r in records], dtype=np.int64),
        src_keys=np.asarray([r.src_key for r in records]),
        dst_keys=np.asarray([r.dst_key for r in records]),
        feature_names=feature_names,
        label_map=label_map,
        normalizer=normalizer,
        split=split,
    )


def save_cache(directory: str | Path, dataset: FlowDataset,
               extra_sidecar: dict | None = None) -> tuple[Path, Path]:
    """Write cache.npz + sidecar.json; the sidecar is byte-stable for a
    fixed dataset and seed."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cache_path = directory / "cache.npz"
    sidecar_path = directory / "sidecar.json"
    np.savez(cache_path,
             features=dataset.features,
             labels=dataset.labels,
             src_keys=dataset.src_keys.astype(str),
             dst_keys=dataset.dst_keys.astype(str))
    sidecar = {
        "feature_names": dataset.feature_names,
        "label_map": dataset.label_map,
        "normalizer": {"mins": dataset.normalizer.mins.tolist(),
                       "maxs": dataset.normalizer.maxs.tolist()},
        "split": dataset.split.to_dict(),
        "n_records": dataset.n_records,
    }
    if extra_sidecar:
        sidecar.update(extra_sidecar)
    sidecar_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return cache_path, sidecar_path


def load_cache(directory: str | Path) -> FlowDataset:
    directory = Path(directory)
    arrays = np.load(directory / "cache.npz", allow_pickle=False)
    sidecar = json.loads((directory / "sidecar.json").read_text())
    return FlowDataset(
        features=arrays["features"],
        labels=arrays["labels"],
        src_keys=arrays["src_keys"],
        dst_keys=arrays["dst_keys"],
        feature_names=list(sidecar["feature_names"]),
        label_map={k: int(v) for k, v in sidecar["label_map"].items()},
        normalizer=Normalizer(mins=np.asarray(sidecar["normalizer"]["mins"]),
                              maxs=np.asarray(sidecar["normalizer"]["maxs"])),
        split=DatasetSplit.from_dict(sidecar["split"]),
    )
