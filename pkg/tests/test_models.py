"""Model-layer tests: naive-oracle equivalence, structure, gradients."""

import numpy as np
import pytest

from flowgnn import autodiff as ad
from flowgnn.autodiff import Parameter, RowGroups
from flowgnn.errors import ConfigError
from flowgnn.models import (EdgeSageModel, LineGatModel,
                            attention_scores, build_model, edge_embedding,
                            load_checkpoint, resgat_layer, sage_layer, save_checkpoint)
from flowgnn.sampling import full_line_neighborhood, sample_khop

from oracles import naive_gat_logits, naive_sage_logits, random_bipartite


def small_instance(rng, d=5, n_edges_max=12):
    g = random_bipartite(rng, n_src_max=4, n_dst_max=4, n_edges_max=n_edges_max)
    features = rng.normal(size=(g.n_edges, d))
    return g, features


class TestSageLayer:
    def test_identical_rows_under_symmetric_inputs(self):
        d, h = 3, 4
        rng = np.random.default_rng(0)
        edge_feats = ad.constant(np.full((6, d), 0.7))
        nodes = ad.constant(np.ones((4, d)))
        w = Parameter("w", rng.normal(size=(2 * d, h)))
        samples = rng.integers(0, 6, size=(4, 3))
        out = sage_layer(nodes, edge_feats, samples, w)
        for row in out.values[1:]:
            np.testing.assert_allclose(row, out.values[0], atol=1e-12)

    def test_singleton_neighborhood_mean_is_the_edge(self):
        d = 4
        rng = np.random.default_rng(1)
        e = rng.normal(size=(1, d))
        edge_feats = ad.constant(e)
        nodes = ad.constant(np.ones((1, d)))
        w = Parameter("w", np.vstack([np.zeros((d, d)), np.eye(d)]))  # pass-through
        out = sage_layer(nodes, edge_feats, np.zeros((1, 3), dtype=int), w)
        np.testing.assert_allclose(out.values, np.maximum(e, 0.0), atol=1e-12)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(2)
        d, h = 4, 6
        feats = rng.normal(size=(10, d))
        w = Parameter("w", rng.normal(size=(2 * d, h)))
        samples = rng.integers(0, 10, size=(5, 3))
        nodes = ad.constant(np.ones((5, d)))
        out = sage_layer(nodes, ad.constant(feats), samples, w)
        for i in range(5):
            mean = feats[samples[i]].mean(axis=0)
            pre = np.concatenate([np.ones(d), mean]) @ w.values
            np.testing.assert_allclose(out.values[i], np.maximum(pre, 0.0), atol=1e-9)


class TestEdgeEmbedding:
    def test_widths(self):
        h_u = ad.constant(np.zeros((3, 128)))
        h_v = ad.constant(np.zeros((3, 128)))
        raw = ad.constant(np.zeros((3, 39)))
        assert edge_embedding(h_u, h_v, None, "original").shape == (3, 256)
        assert edge_embedding(h_u, h_v, raw, "modified").shape == (3, 295)

    def test_zero_raw_gives_zero_tail(self):
        rng = np.random.default_rng(3)
        h_u = ad.constant(rng.normal(size=(2, 4)))
        h_v = ad.constant(rng.normal(size=(2, 4)))
        raw = ad.constant(np.zeros((2, 3)))
        out = edge_embedding(h_u, h_v, raw, "modified")
        np.testing.assert_array_equal(out.values[:, -3:], 0.0)

    def test_swapping_endpoints_swaps_blocks(self):
        rng = np.random.default_rng(4)
        h_u = ad.constant(rng.normal(size=(2, 4)))
        h_v = ad.constant(rng.normal(size=(2, 4)))
        a = edge_embedding(h_u, h_v, None, "original").values
        b = edge_embedding(h_v, h_u, None, "original").values
        np.testing.assert_array_equal(a[:, :4], b[:, 4:])
        np.testing.assert_array_equal(a[:, 4:], b[:, :4])


class TestAttentionScores:
    def test_zero_vector_gives_uniform(self):
        rng = np.random.default_rng(5)
        states = ad.constant(rng.normal(size=(4, 3)))
        w = Parameter("w", rng.normal(size=(3, 2)))
        a = Parameter("a", np.zeros((4, 1)))
        pair_u = np.array([0, 1, 2, 3])
        pair_v = np.array([0, 0, 3, 3])
        groups = RowGroups.contiguous(np.array([0, 2, 4]), 4)
        alpha, _ = attention_scores(states, pair_u, pair_v, w, a, groups)
        np.testing.assert_allclose(alpha.values[:, 0], [0.5, 0.5, 0.5, 0.5])

    def test_single_neighbor_alpha_one(self):
        rng = np.random.default_rng(6)
        states = ad.constant(rng.normal(size=(2, 3)))
        w = Parameter("w", rng.normal(size=(3, 2)))
        a = Parameter("a", rng.normal(size=(4, 1)))
        groups = RowGroups.contiguous(np.array([0, 1]), 1)
        alpha, _ = attention_scores(states, np.array([1]), np.array([0]), w, a, groups)
        assert alpha.values[0, 0] == pytest.approx(1.0)

    def test_matches_naive_pairwise(self):
        rng = np.random.default_rng(7)
        n, d, hd = 4, 3, 2
        states = rng.normal(size=(n, d))
        w = Parameter("w", rng.normal(size=(d, hd)))
        a = Parameter("a", rng.normal(size=(2 * hd, 1)))
        # every node attends over all nodes
        pair_u = np.tile(np.arange(n), n)
        pair_v = np.repeat(np.arange(n), n)
        groups = RowGroups.contiguous(np.arange(0, n * n + 1, n), n * n)
        alpha, _ = attention_scores(ad.constant(states), pair_u, pair_v, w, a, groups)
        proj = states @ w.values
        for v in range(n):
            logits = []
            for u in range(n):
                cat = np.concatenate([proj[u], proj[v]])
                s = float(cat @ a.values[:, 0])
                logits.append(s if s > 0 else 0.2 * s)
            ex = np.exp(np.array(logits) - max(logits))
            expected = ex / ex.sum()
            got = alpha.values[v * n:(v + 1) * n, 0]
            np.testing.assert_allclose(got, expected, atol=1e-10)


class TestResgatLayer:
    def _neigh(self, rng, n_edges=8):
        g = random_bipartite(rng, n_src_max=3, n_dst_max=3, n_edges_max=n_edges)
        return g, full_line_neighborhood(g, np.arange(g.n_edges), hops=1)

    def test_single_head_uniform_alpha_reduces_to_mean(self):
        # zero attention vector: alpha uniform, so each head is
        # elu(mean-like weighted sum) with equal weights
        rng = np.random.default_rng(8)
        g, neigh = self._neigh(rng)
        d, hd = 4, 3
        states_np = rng.normal(size=(neigh.n_nodes, d))
        w = Parameter("w", rng.normal(size=(d, hd)))
        a = Parameter("a", np.zeros((2 * hd, 1)))
        out = resgat_layer(ad.constant(states_np), None, neigh, [(w, a)], residual=False)
        proj = states_np @ w.values
        for v in range(neigh.n_nodes):
            nbrs = neigh.neighbor_positions(v)
            mean = proj[nbrs].mean(axis=0)
            expected = np.where(mean > 0, mean, np.expm1(mean))
            np.testing.assert_allclose(out.values[v], expected, atol=1e-9)

    def test_residual_width_six_heads(self):
        rng = np.random.default_rng(9)
        g, neigh = self._neigh(rng)
        d, hd, m = 5, 3, 6
        states = ad.constant(rng.normal(size=(neigh.n_nodes, d)))
        heads = [(Parameter(f"w{i}", rng.normal(size=(d, hd))),
                  Parameter(f"a{i}", rng.normal(size=(2 * hd, 1)))) for i in range(m)]
        out = resgat_layer(states, states, neigh, heads, residual=True)
        assert out.shape == (neigh.n_nodes, m * hd + d)

    def test_equal_neighbor_states_average_to_same(self):
        rng = np.random.default_rng(10)
        g, neigh = self._neigh(rng)
        d, hd = 3, 2
        s = rng.normal(size=d)
        states = ad.constant(np.tile(s, (neigh.n_nodes, 1)))
        w = Parameter("w", rng.normal(size=(d, hd)))
        a = Parameter("a", rng.normal(size=(2 * hd, 1)))
        out = resgat_layer(states, None, neigh, [(w, a)], residual=False)
        proj = s @ w.values
        expected = np.where(proj > 0, proj, np.expm1(proj))
        for v in range(neigh.n_nodes):
            np.testing.assert_allclose(out.values[v], expected, atol=1e-9)


def build_sage_neighborhood(g, batch, layers, sample_size, seed):
    return sample_khop(g, batch, hops=layers, sample_size=sample_size, seed=seed)


class TestSageForwardOracle:
    @pytest.mark.parametrize("variant", ["egraphsage", "egraphsage_modified"])
    def test_matches_naive_evaluator(self, variant):
        rng = np.random.default_rng(11)
        for trial in range(25):
            g, features = small_instance(rng)
            model = build_model(variant, features.shape[1], 3,
                                seed=int(rng.integers(0, 2**31)), hidden=6, layers=2)
            batch = rng.choice(g.n_edges, size=min(4, g.n_edges), replace=False)
            neigh = build_sage_neighborhood(g, batch, 2, 3, seed=trial)
            got = model.forward(features, g, neigh).values
            expected = naive_sage_logits(features, g, neigh, model.layer_weights,
                                         model.classifier, model.config.variant)
            np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_logits_shape_and_finite(self):
        rng = np.random.default_rng(12)
        g, features = small_instance(rng)
        model = build_model("egraphsage", features.shape[1], 4, seed=0, hidden=8)
        batch = np.arange(min(3, g.n_edges))
        neigh = build_sage_neighborhood(g, batch, 2, 4, seed=0)
        out = model.forward(features, g, neigh)
        assert out.shape == (len(batch), 4)
        assert np.all(np.isfinite(out.values))

    def test_batch_permutation_equivariance(self):
        rng = np.random.default_rng(13)
        g, features = small_instance(rng, n_edges_max=10)
        if g.n_edges < 4:
            pytest.skip("small draw")
        model = build_model("egraphsage_modified", features.shape[1], 3, seed=1, hidden=6)
        batch = np.array([0, 1, 2, 3])
        perm = np.array([2, 0, 3, 1])
        neigh_a = build_sage_neighborhood(g, batch, 2, g.degrees().max(), seed=5)
        neigh_b = build_sage_neighborhood(g, batch[perm], 2, g.degrees().max(), seed=5)
        a = model.forward(features, g, neigh_a).values
        b = model.forward(features, g, neigh_b).values
        # full sampling makes neighborhoods deterministic up to multiset, so
        # rows must match after permutation
        np.testing.assert_allclose(a[perm], b, atol=1e-9)

    def test_wrong_neighborhood_kind_rejected(self):
        rng = np.random.default_rng(14)
        g, features = small_instance(rng)
        model = build_model("egraphsage", features.shape[1], 2, seed=0, hidden=4)
        line_neigh = full_line_neighborhood(g, [0], hops=1)
        with pytest.raises(ConfigError):
            model.forward(features, g, line_neigh)


class TestGatForwardOracle:
    @pytest.mark.parametrize("variant", ["gat", "eresgat"])
    def test_matches_naive_evaluator(self, variant):
        rng = np.random.default_rng(15)
        for trial in range(25):
            g, features = small_instance(rng)
            model = build_model(variant, features.shape[1], 3,
                                seed=int(rng.integers(0, 2**31)),
                                layers=2, heads=2, head_dim=3)
            batch = rng.choice(g.n_edges, size=min(4, g.n_edges), replace=False)
            neigh = full_line_neighborhood(g, batch, hops=2)
            got = model.forward(features, g, neigh).values
            expected = naive_gat_logits(features, neigh, model.head_params,
                                        model.classifier, model.config.residual)
            np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_wrong_neighborhood_kind_rejected(self):
        rng = np.random.default_rng(16)
        g, features = small_instance(rng)
        model = build_model("gat", features.shape[1], 2, seed=0, heads=2, head_dim=3)
        neigh = build_sage_neighborhood(g, np.arange(min(2, g.n_edges)), 2, 2, seed=0)
        with pytest.raises(ConfigError):
            model.forward(features, g, neigh)

    def test_attention_dropout_training_only(self):
        rng = np.random.default_rng(22)
        g, features = small_instance(rng)
        model = build_model("eresgat", features.shape[1], 2, seed=0,
                            layers=2, heads=2, head_dim=3, attn_dropout=0.5)
        neigh = full_line_neighborhood(g, np.arange(min(3, g.n_edges)), hops=2)
        eval_a = model.forward(features, g, neigh, training=False).values
        eval_b = model.forward(features, g, neigh, training=False).values
        np.testing.assert_array_equal(eval_a, eval_b)
        train_a = model.forward(features, g, neigh, training=True,
                                rng=np.random.default_rng(1)).values
        train_b = model.forward(features, g, neigh, training=True,
                                rng=np.random.default_rng(1)).values
        np.testing.assert_array_equal(train_a, train_b)  # same generator state
        train_c = model.forward(features, g, neigh, training=True,
                                rng=np.random.default_rng(2)).values
        assert not np.array_equal(train_a, train_c)  # dropout is active

    def test_attention_sums_audited(self):
        rng = np.random.default_rng(17)
        g, features = small_instance(rng)
        model = build_model("eresgat", features.shape[1], 2, seed=0,
                            layers=2, heads=2, head_dim=3)
        model.attn_audit = []
        neigh = full_line_neighborhood(g, np.arange(min(3, g.n_edges)), hops=2)
        model.forward(features, g, neigh)
        assert len(model.attn_audit) == 2 * 2  # layers x heads
        assert max(model.attn_audit) < 1e-6


class TestStructuralInvariants:
    def test_modified_prefix_equals_original_embedding(self):
        rng = np.random.default_rng(18)
        for trial in range(10):
            g, features = small_instance(rng)
            seed = int(rng.integers(0, 2**31))
            original = build_model("egraphsage", features.shape[1], 3, seed=seed, hidden=5)
            modified = build_model("egraphsage_modified", features.shape[1], 3,
                                   seed=seed, hidden=5)
            # identical seeds give identical layer weights
            for w_o, w_m in zip(original.layer_weights, modified.layer_weights):
                np.testing.assert_array_equal(w_o.values, w_m.values)
            batch = rng.choice(g.n_edges, size=min(3, g.n_edges), replace=False)
            neigh = build_sage_neighborhood(g, batch, 2, 3, seed=trial)
            z_o = original.embed(features, g, neigh).values
            z_m = modified.embed(features, g, neigh).values
            np.testing.assert_array_equal(z_m[:, :z_o.shape[1]], z_o)
            np.testing.assert_array_equal(z_m[:, z_o.shape[1]:], features[neigh.batch])

    def test_resgat_states_end_in_raw_features_every_layer(self):
        rng = np.random.default_rng(19)
        g, features = small_instance(rng)
        d = features.shape[1]
        model = build_model("eresgat", d, 2, seed=3, layers=3, heads=2, head_dim=3)
        neigh = full_line_neighborhood(g, np.arange(min(3, g.n_edges)), hops=2)
        raw = ad.constant(features[neigh.nodes])
        h = raw
        for k in range(1, 4):
            h = resgat_layer(h, raw, neigh, model.head_params[k - 1], residual=True)
            np.testing.assert_array_equal(h.values[:, -d:], features[neigh.nodes])


class TestModelGradients:
    def test_sage_model_grad_check(self):
        rng = np.random.default_rng(20)
        g, features = small_instance(rng, d=3)
        model = build_model("egraphsage_modified", 3, 2, seed=4, hidden=3)
        batch = np.arange(min(3, g.n_edges))
        neigh = build_sage_neighborhood(g, batch, 2, 2, seed=1)
        labels = rng.integers(0, 2, size=len(batch))
        def f():
            return ad.cross_entropy(model.forward(features, g, neigh), labels)
        assert ad.grad_check(f, model.parameters()) < 1e-4

    @pytest.mark.parametrize("variant", ["gat", "eresgat"])
    def test_gat_model_grad_check(self, variant):
        rng = np.random.default_rng(21)
        g, features = small_instance(rng, d=3, n_edges_max=8)
        model = build_model(variant, 3, 2, seed=5, layers=2, heads=2, head_dim=2)
        batch = np.arange(min(3, g.n_edges))
        neigh = full_line_neighborhood(g, batch, hops=2)
        labels = rng.integers(0, 2, size=len(batch))
        def f():
            return ad.cross_entropy(model.forward(features, g, neigh), labels)
        assert ad.grad_check(f, model.parameters()) < 1e-4


class TestCheckpointing:
    def test_roundtrip(self, tmp_path):
        model = build_model("eresgat", 7, 3, seed=6, layers=2, heads=2, head_dim=4)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, model)
        again = load_checkpoint(path)
        assert isinstance(again, LineGatModel)
        assert again.config == model.config
        for p, q in zip(model.parameters(), again.parameters()):
            assert p.name == q.name
            np.testing.assert_array_equal(p.values, q.values)

    def test_sage_roundtrip(self, tmp_path):
        model = build_model("egraphsage_modified", 5, 4, seed=7, hidden=6)
        path = tmp_path / "ckpt.npz"
        save_checkpoint(path, model)
        again = load_checkpoint(path)
        assert isinstance(again, EdgeSageModel)
        assert again.config == model.config

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError, match="valid variants"):
            build_model("mystery", 4, 2, seed=0)
