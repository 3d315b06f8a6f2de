#!/usr/bin/env python3
# The operator pipeline end to end: prepare -> train -> eval -> embed,
# driven by one manifest, then a t-SNE plot of the exported embeddings.

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from flowgnn.cli import main
from flowgnn.synth import toniot_like, write_schema

root = Path(tempfile.mkdtemp())
toniot_like(3000, seed=2, n_src=400, n_dst=900).write_csv(root / "flows.csv")
write_schema(root / "schema.txt")
(root / "model.json").write_text(json.dumps(
    {"variant": "egraphsage_modified", "hidden": 32}))
(root / "train.json").write_text(json.dumps(
    {"batch_size": 100, "epochs": 12, "lr": 0.01, "sample_size": 8, "target": "multi"}))
(root / "manifest.json").write_text(json.dumps({
    "dataset": "flows.csv", "schema": "schema.txt",
    "model_config": "model.json", "train_config": "train.json",
    "output_dir": "out", "seed": 42,
}))

manifest = str(root / "manifest.json")
for command in (["prepare"], ["train"], ["eval"], ["embed", "--split", "test"]):
    print(f"\n$ flowgnn {' '.join(command)} --manifest manifest.json")
    rc = main(command + ["--manifest", manifest])
    assert rc == 0, f"{command} failed with exit code {rc}"

# the embeddings CSV feeds the standalone scatter-plot script
plot = Path(__file__).resolve().parents[1] / "viz" / "plot_tsne.py"
out_png = root / "out" / "tsne.png"
proc = subprocess.run([sys.executable, str(plot),
                       "--input", str(root / "out" / "embeddings_test.csv"),
                       "--output", str(out_png), "--max-rows", "600"],
                      capture_output=True, text=True)
print("\n$ viz/plot_tsne.py ...")
print(proc.stdout.strip() or proc.stderr.strip())
print(f"\nartifacts under {root}/out")
