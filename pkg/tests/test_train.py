"""Optimizer and training-loop tests."""

import hashlib

import numpy as np
import pytest

from flowgnn.autodiff import Parameter
from flowgnn.ingest import FlowDataset, Normalizer, split_dataset
from flowgnn.models import build_model
from flowgnn.synth import two_class
from flowgnn.train import (TrainConfig, adam_step, build_graph, evaluate, run_training,
                           train_epoch, training_labels)


def dataset_from_table(table, seed=0):
    n = table.n_rows
    labels = np.array([0 if lab == "normal" else 1 for lab in table.label])
    feats = table.features.copy()
    mins, maxs = feats.min(axis=0), feats.max(axis=0)
    feats = (feats - mins) / np.where(maxs > mins, maxs - mins, 1.0)
    return FlowDataset(
        features=feats, labels=labels,
        src_keys=np.asarray([f"S:{s}" for s in table.src_ip]),
        dst_keys=np.asarray([f"D:{d}" for d in table.dst_ip]),
        feature_names=[f"f{i}" for i in range(feats.shape[1])],
        label_map={"normal": 0, "attack": 1},
        normalizer=Normalizer(mins=mins, maxs=maxs),
        split=split_dataset(n, seed),
    )


@pytest.fixture(scope="module")
def small_dataset():
    return dataset_from_table(two_class(400, seed=7, n_src=12, n_dst=30), seed=1)


def param_digest(model):
    h = hashlib.sha256()
    for p in model.parameters():
        h.update(p.values.tobytes())
    return h.hexdigest()


class TestAdamStep:
    def test_first_step_magnitude_near_lr(self):
        for g in (0.5, -3.0, 100.0):
            p = Parameter("p", np.array([[1.0]]))
            p.grad = np.array([[g]])
            adam_step([p], lr=0.01)
            expected = 0.01 * g / (abs(g) + 1e-8)
            assert p.values[0, 0] == pytest.approx(1.0 - expected, abs=1e-12)

    def test_zero_gradient_no_change(self):
        p = Parameter("p", np.array([[2.0, -1.0]]))
        for _ in range(5):
            p.grad = np.zeros((1, 2))
            adam_step([p], lr=0.1)
        np.testing.assert_array_equal(p.values, [[2.0, -1.0]])

    def test_missing_gradient_rejected(self):
        p = Parameter("p", np.ones((1, 1)))
        with pytest.raises(ValueError, match="no gradient"):
            adam_step([p], lr=0.1)

    def test_gradients_zeroed_and_step_counted(self):
        p = Parameter("p", np.ones((2, 2)))
        p.grad = np.ones((2, 2))
        adam_step([p], lr=0.01)
        assert p.grad is None
        assert p.step_count == 1

    def test_determinism_bitwise(self):
        def run():
            rng = np.random.default_rng(3)
            p = Parameter("p", np.ones((3, 2)))
            for _ in range(20):
                p.grad = rng.normal(size=(3, 2))
                adam_step([p], lr=0.005)
            return p.values.tobytes()
        assert run() == run()


class TestTrainEpoch:
    def test_loss_decreases_on_learnable_task(self):
        dataset = dataset_from_table(two_class(2000, seed=3, n_src=40, n_dst=100), seed=2)
        graph = build_graph(dataset, augment_seed=0)
        model = build_model("egraphsage_modified", dataset.n_features, 2,
                            seed=0, hidden=16)
        config = TrainConfig(batch_size=50, epochs=1, lr=0.01, seed=0, sample_size=4)
        losses, _ = train_epoch(model, dataset, graph, config, epoch=0)
        assert losses[-1] < losses[0]

    def test_lr_zero_equivalent_check_via_zero_grad_updates(self, small_dataset):
        # lr must be positive by contract; the no-op behaviour is covered by
        # Adam's zero-gradient case, so here we check the batch count instead
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("egraphsage", small_dataset.n_features, 2, seed=0, hidden=8)
        config = TrainConfig(batch_size=50, epochs=1, lr=0.01, seed=0, sample_size=4)
        losses, seconds = train_epoch(model, small_dataset, graph, config, epoch=0)
        assert len(losses) == len(seconds) == 4  # 200 train edges / 50

    def test_epoch_reshuffles_deterministically(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        def run():
            model = build_model("egraphsage", small_dataset.n_features, 2, seed=0, hidden=8)
            config = TrainConfig(batch_size=64, epochs=1, lr=0.01, seed=5, sample_size=4)
            losses, _ = train_epoch(model, small_dataset, graph, config, epoch=0)
            return losses, param_digest(model)
        (losses_a, digest_a), (losses_b, digest_b) = run(), run()
        assert losses_a == losses_b
        assert digest_a == digest_b

    def test_losses_finite(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("eresgat", small_dataset.n_features, 2, seed=0,
                            layers=2, heads=2, head_dim=4)
        config = TrainConfig(batch_size=100, epochs=1, lr=0.01, seed=0)
        losses, _ = train_epoch(model, small_dataset, graph, config, epoch=0)
        assert np.isfinite(losses).all()


class TestEvaluate:
    def test_always_predict_zero_binary_weighted_f1(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("egraphsage", small_dataset.n_features, 2, seed=0, hidden=4)
        # force constant class-0 predictions via a zero classifier with bias
        # pattern: zero weights give equal logits, argmax picks class 0
        for p in model.parameters():
            p.values[...] = 0.0
        config = TrainConfig(batch_size=100, seed=0, sample_size=2)
        ids = small_dataset.split.test
        report = evaluate(model, small_dataset, graph, ids, "binary", config)
        share = (small_dataset.labels[ids] == 0).mean()
        f1_0 = 2 * share / (share + 1.0)
        assert report.weighted_f1 == pytest.approx(share * f1_0, abs=1e-12)

    def test_perfect_predictor_scores_one(self):
        from flowgnn.metrics import f1_scores
        perfect = f1_scores(np.diag([30, 10]))
        assert perfect.weighted_f1 == 1.0 and perfect.macro_f1 == 1.0

    def test_multi_report_has_c_classes(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("egraphsage", small_dataset.n_features, 2, seed=0, hidden=4)
        config = TrainConfig(batch_size=100, seed=0, sample_size=2)
        report = evaluate(model, small_dataset, graph, small_dataset.split.validation,
                          "multi", config)
        assert report.n_classes == small_dataset.n_classes

    def test_evaluation_does_not_mutate_parameters(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("eresgat", small_dataset.n_features, 2, seed=0,
                            layers=2, heads=2, head_dim=4)
        config = TrainConfig(batch_size=100, seed=0)
        before = param_digest(model)
        evaluate(model, small_dataset, graph, small_dataset.split.test, "binary", config)
        assert param_digest(model) == before


class TestRunTraining:
    def test_full_run_record(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("egraphsage_modified", small_dataset.n_features, 2,
                            seed=0, hidden=8)
        config = TrainConfig(batch_size=50, epochs=2, lr=0.01, seed=0, sample_size=4)
        record = run_training(model, small_dataset, graph, config)
        assert len(record.batch_losses) == 8  # 4 batches x 2 epochs
        assert "test" in record.metrics
        assert "binary" in record.metrics["test"] and "multi" in record.metrics["test"]
        assert record.model_config["kind"] == "sage"

    def test_binary_target_labels(self, small_dataset):
        labels, n, names = training_labels(small_dataset, "binary")
        assert n == 2 and names == ["normal", "attack"]
        assert set(np.unique(labels)) <= {0, 1}

    def test_identical_configs_identical_metrics(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        def run():
            model = build_model("egraphsage_modified", small_dataset.n_features, 2,
                                seed=11, hidden=8)
            config = TrainConfig(batch_size=50, epochs=1, lr=0.01, seed=11, sample_size=4)
            return run_training(model, small_dataset, graph, config)
        a, b = run(), run()
        assert a.batch_losses == b.batch_losses
        assert a.metrics == b.metrics


class TestInductiveMode:
    def test_train_neighbors_restricted(self, small_dataset):
        graph = build_graph(small_dataset, augment_seed=0)
        model = build_model("egraphsage", small_dataset.n_features, 2, seed=0, hidden=8)
        config = TrainConfig(batch_size=50, epochs=1, lr=0.01, seed=0,
                             sample_size=4, inductive=True)
        losses, _ = train_epoch(model, small_dataset, graph, config, epoch=0)
        assert np.isfinite(losses).all()
