"""Command-line pipeline tests on a small synthetic corpus."""

import csv
import json

import numpy as np
import pytest

from flowgnn.cli import main
from flowgnn.synth import toniot_like, two_class, write_schema


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    table = two_class(600, seed=5, n_src=20, n_dst=50)
    table.write_csv(root / "flows.csv")
    write_schema(root / "schema.txt")
    (root / "model.json").write_text(json.dumps(
        {"variant": "egraphsage_modified", "hidden": 16}))
    (root / "train.json").write_text(json.dumps(
        {"batch_size": 100, "epochs": 2, "lr": 0.01, "sample_size": 4, "target": "binary"}))
    (root / "manifest.json").write_text(json.dumps({
        "dataset": "flows.csv", "schema": "schema.txt",
        "model_config": "model.json", "train_config": "train.json",
        "output_dir": "out", "seed": 3,
    }))
    return root


def run(workspace, *args):
    return main(["--manifest", str(workspace / "manifest.json")][:0] + list(args))


class TestPrepare:
    def test_writes_cache_and_sidecar(self, workspace):
        rc = main(["prepare", "--manifest", str(workspace / "manifest.json")])
        assert rc == 0
        sidecar = json.loads((workspace / "out/cache/sidecar.json").read_text())
        assert sidecar["n_classes"] == 2
        assert sidecar["graph"]["n_edges"] == 600
        assert "line_edge_estimate" in sidecar["graph"]
        assert (workspace / "out/cache/cache.npz").exists()

    def test_rerun_sidecar_byte_identical(self, workspace):
        sidecar = workspace / "out/cache/sidecar.json"
        first = sidecar.read_bytes()
        assert main(["prepare", "--manifest", str(workspace / "manifest.json")]) == 0
        assert sidecar.read_bytes() == first

    def test_ten_class_sidecar(self, tmp_path):
        table = toniot_like(300, seed=1)
        table.write_csv(tmp_path / "flows.csv")
        write_schema(tmp_path / "schema.txt")
        (tmp_path / "model.json").write_text(json.dumps({"variant": "egraphsage"}))
        (tmp_path / "train.json").write_text(json.dumps({"epochs": 1}))
        (tmp_path / "manifest.json").write_text(json.dumps({
            "dataset": "flows.csv", "schema": "schema.txt",
            "model_config": "model.json", "train_config": "train.json",
            "output_dir": "out", "seed": 0,
        }))
        assert main(["prepare", "--manifest", str(tmp_path / "manifest.json")]) == 0
        sidecar = json.loads((tmp_path / "out/cache/sidecar.json").read_text())
        assert sidecar["n_classes"] == 10

    def test_missing_label_column_exits_2(self, tmp_path, capsys):
        (tmp_path / "flows.csv").write_text("src_ip,dst_ip,f0\n1.1.1.1,2.2.2.2,0.5\n")
        (tmp_path / "schema.txt").write_text("src_ip=src_ip\ndst_ip=dst_ip\nlabel=missing_label\n")
        (tmp_path / "model.json").write_text(json.dumps({"variant": "egraphsage"}))
        (tmp_path / "train.json").write_text(json.dumps({}))
        (tmp_path / "manifest.json").write_text(json.dumps({
            "dataset": "flows.csv", "schema": "schema.txt",
            "model_config": "model.json", "train_config": "train.json",
            "output_dir": "out", "seed": 0,
        }))
        rc = main(["prepare", "--manifest", str(tmp_path / "manifest.json")])
        assert rc == 2
        assert "missing_label" in capsys.readouterr().err


class TestTrain:
    def test_train_writes_checkpoint_and_record(self, workspace):
        rc = main(["train", "--manifest", str(workspace / "manifest.json")])
        assert rc == 0
        record = json.loads((workspace / "out/run_record.json").read_text())
        # 300 train edges at batch 100 -> 3 batches per epoch, 2 epochs
        assert len(record["batch_losses"]) == 6
        assert len(record["batch_seconds"]) == 6
        assert record["checkpoint"].endswith("checkpoint.npz")
        assert (workspace / "out/checkpoint.npz").exists()
        assert record["metrics"]["test"]["binary"]["weighted_f1"] > 0

    def test_unknown_variant_exits_2(self, workspace, capsys):
        bad = workspace / "bad_model.json"
        bad.write_text(json.dumps({"variant": "mystery"}))
        manifest = json.loads((workspace / "manifest.json").read_text())
        manifest["model_config"] = "bad_model.json"
        (workspace / "bad_manifest.json").write_text(json.dumps(manifest))
        rc = main(["train", "--manifest", str(workspace / "bad_manifest.json")])
        assert rc == 2
        err = capsys.readouterr().err
        assert "egraphsage" in err and "eresgat" in err

    def test_train_without_prepare_exits_2(self, tmp_path, workspace):
        manifest = json.loads((workspace / "manifest.json").read_text())
        manifest["output_dir"] = str(tmp_path / "fresh_out")
        m = workspace / "fresh_manifest.json"
        m.write_text(json.dumps(manifest))
        assert main(["train", "--manifest", str(m)]) == 2


class TestEvalAndEmbed:
    def test_eval_writes_reports(self, workspace, capsys):
        rc = main(["eval", "--manifest", str(workspace / "manifest.json")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "weighted F1" in out
        report = json.loads((workspace / "out/eval_binary.json").read_text())
        assert len(report["f1"]) == 2
        assert report["class_names"] == ["normal", "attack"]

    def test_embed_csv_shape(self, workspace):
        rc = main(["embed", "--manifest", str(workspace / "manifest.json"),
                   "--split", "test"])
        assert rc == 0
        path = workspace / "out/embeddings_test.csv"
        with path.open() as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        # modified embedding: 2*hidden + features = 2*16 + 10
        assert header[:2] == ["edge_id", "label"]
        assert header[2] == "e0" and len(header) == 2 + 42
        assert len(body) == 180  # 30% of 600
        sidecar = json.loads((workspace / "out/cache/sidecar.json").read_text())
        split_test = sidecar["split"]["test"]
        assert [int(r[0]) for r in body] == split_test

    def test_embed_labels_match_dataset(self, workspace):
        import numpy as np
        data = np.load(workspace / "out/cache/cache.npz")
        path = workspace / "out/embeddings_test.csv"
        with path.open() as fh:
            rows = list(csv.reader(fh))[1:]
        for row in rows[:20]:
            assert int(row[1]) == int(data["labels"][int(row[0])])

    def test_checkpoint_feature_mismatch_exits_2(self, workspace, tmp_path):
        # prepare a cache with a different feature count, then eval with the
        # existing checkpoint
        table = two_class(120, seed=9, n_features=6)
        table.write_csv(workspace / "other.csv")
        manifest = json.loads((workspace / "manifest.json").read_text())
        manifest["dataset"] = "other.csv"
        manifest["output_dir"] = str(tmp_path / "other_out")
        m = workspace / "other_manifest.json"
        m.write_text(json.dumps(manifest))
        assert main(["prepare", "--manifest", str(m)]) == 0
        rc = main(["eval", "--manifest", str(m),
                   "--checkpoint", str(workspace / "out/checkpoint.npz")])
        assert rc == 2


class TestDeterminism:
    def test_two_full_runs_identical_metrics(self, workspace, tmp_path):
        records = []
        for name in ("run_a", "run_b"):
            manifest = json.loads((workspace / "manifest.json").read_text())
            manifest["output_dir"] = str(tmp_path / name)
            m = workspace / f"{name}_manifest.json"
            m.write_text(json.dumps(manifest))
            assert main(["prepare", "--manifest", str(m)]) == 0
            assert main(["train", "--manifest", str(m)]) == 0
            record = json.loads((tmp_path / name / "run_record.json").read_text())
            records.append(record)
        assert records[0]["metrics"] == records[1]["metrics"]
        assert records[0]["batch_losses"] == records[1]["batch_losses"]


class TestUsage:
    def test_no_command_exits_2(self, capsys):
        assert main([]) == 2

    def test_missing_manifest_exits_2(self, capsys):
        assert main(["prepare", "--manifest", "/nonexistent/manifest.json"]) == 2
