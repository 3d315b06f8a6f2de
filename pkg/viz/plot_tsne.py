#!/usr/bin/env python3
"""2-D scatter plots of learned flow embeddings.

Reads the embedding CSV exported by the trainer (header
``edge_id,label,e0..eN``), projects the embedding columns to two dimensions
with t-SNE, and renders a PNG with one color and legend entry per class.
The majority class can be omitted so minority structure stays visible.

Usage:
  plot_tsne.py --input embeddings.csv --output plot.png
               [--omit-class N] [--seed S] [--perplexity P] [--max-rows M]
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from sklearn.manifold import TSNE

DEFAULT_MAX_ROWS = 10_000
DEFAULT_PERPLEXITY = 30.0


class InputError(Exception):
    pass


def load_embeddings(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse an embedding CSV into (edge_ids, labels, matrix)."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty")
        if header[:2] != ["edge_id", "label"] or len(header) < 3:
            raise InputError(
                f"{path} is not an embedding CSV (expected header edge_id,label,e0..)")
        ids, labels, rows = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputError(f"{path}:{line_no}: expected {len(header)} cells")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                rows.append([float(c) for c in row[2:]])
            except ValueError as e:
                raise InputError(f"{path}:{line_no}: {e}")
    if len(rows) < 2:
        raise InputError(f"{path} holds fewer than 2 embeddings")
    return np.asarray(ids), np.asarray(labels), np.asarray(rows)


def stratified_subsample(labels: np.ndarray, max_rows: int, seed: int) -> np.ndarray:
    """Row indices capped at max_rows, sampled per class proportionally
    (every class keeps at least one row)."""
    n = len(labels)
    if n <= max_rows:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    keep: list[np.ndarray] = []
    classes = np.unique(labels)
    for c in classes:
        rows = np.flatnonzero(labels == c)
        quota = max(1, int(round(len(rows) / n * max_rows)))
        if len(rows) > quota:
            rows = rng.choice(rows, size=quota, replace=False)
        keep.append(rows)
    return np.sort(np.concatenate(keep))


def project_2d(matrix: np.ndarray, seed: int, perplexity: float) -> np.ndarray:
    """Deterministic (seeded) t-SNE projection of the embedding columns."""
    if matrix.shape[0] <= perplexity:
        raise InputError(
            f"{matrix.shape[0]} rows cannot support perplexity {perplexity}; "
            f"pass --perplexity below the row count")
    tsne = TSNE(n_components=2, random_state=seed, perplexity=perplexity, init="pca")
    return tsne.fit_transform(matrix)


def render(points: np.ndarray, labels: np.ndarray, output: str | Path,
           title: str | None = None) -> "matplotlib.figure.Figure":
    """Scatter with one color and legend entry per class present."""
    fig, ax = plt.subplots(figsize=(7, 6))
    classes = np.unique(labels)
    cmap = plt.get_cmap("tab10" if len(classes) <= 10 else "tab20")
    for i, c in enumerate(classes):
        mask = labels == c
        ax.scatter(points[mask, 0], points[mask, 1], s=4, alpha=0.6,
                   color=cmap(i % cmap.N), label=str(c))
    ax.legend(title="class", markerscale=3, loc="best", fontsize=8)
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(output, dpi=150)
    return fig


def plot_tsne(input_path: str | Path, output_path: str | Path, *,
              omit_class: int | None = None, seed: int = 0,
              perplexity: float = DEFAULT_PERPLEXITY,
              max_rows: int = DEFAULT_MAX_ROWS) -> "matplotlib.figure.Figure":
    """Full pipeline: load, filter, subsample, project, render, save."""
    _, labels, matrix = load_embeddings(input_path)
    if omit_class is not None:
        keep = labels != omit_class
        labels, matrix = labels[keep], matrix[keep]
        if len(labels) < 2:
            raise InputError(f"omitting class {omit_class} leaves fewer than 2 rows")
    rows = stratified_subsample(labels, max_rows, seed)
    labels, matrix = labels[rows], matrix[rows]
    points = project_2d(matrix, seed, perplexity)
    return render(points, labels, output_path)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", required=True, help="embedding CSV from the trainer")
    parser.add_argument("--output", required=True, help="PNG to write")
    parser.add_argument("--omit-class", type=int, default=None,
                        help="drop this class index from the plot and legend")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--perplexity", type=float, default=DEFAULT_PERPLEXITY)
    parser.add_argument("--max-rows", type=int, default=DEFAULT_MAX_ROWS,
                        help="stratified subsample cap before projection")
    args = parser.parse_args(argv)
    try:
        fig = plot_tsne(args.input, args.output, omit_class=args.omit_class,
                        seed=args.seed, perplexity=args.perplexity,
                        max_rows=args.max_rows)
        plt.close(fig)
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
