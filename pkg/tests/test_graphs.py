import numpy as np
import pytest

from stlfbench.errors import DataError, LeakageError
from stlfbench.graphs import (SimilarityMatrix, bipartite_graph,
                              correntropy_matrix, dtw_matrix, euclidean_matrix,
                              full_graph, graph_from_dense, load_graph,
                              normalize, pearson_matrix, save_graph, sparsify)
from stlfbench.panel import synth_panel

from test_panel import toy_panel

from oracles import pearson_loops


class TestSimilarityMatrices:
    def test_pearson_spec_examples(self):
        p = toy_panel([[1, 2, 3], [2, 4, 6], [3, 2, 1]])
        c = pearson_matrix(p).values
        assert c[0, 1] == pytest.approx(1.0)
        assert c[0, 2] == pytest.approx(-1.0)
        p2 = toy_panel([[1, 2, 3, 4], [1, 3, 2, 4]])
        assert pearson_matrix(p2).values[0, 1] == pytest.approx(0.8)

    def test_pearson_matches_loop_oracle(self):
        rng = np.random.default_rng(0)
        p = toy_panel(rng.uniform(1, 9, size=(5, 40)))
        c = pearson_matrix(p).values
        for i in range(5):
            for j in range(i + 1, 5):
                assert c[i, j] == pytest.approx(
                    pearson_loops(p.values[i], p.values[j]), abs=1e-12)

    def test_pearson_zero_variance_warns(self):
        p = toy_panel([[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
        with pytest.warns(RuntimeWarning, match="zero variance"):
            c = pearson_matrix(p).values
        assert c[0, 1] == 0.0 and c[0, 0] == 1.0

    def test_euclidean_examples(self):
        p = toy_panel([[0.0, 0.0], [3.0, 4.0]])
        d = euclidean_matrix(p, zscore=False, prefer_native=False).values
        assert d[0, 1] == 5.0
        ident = toy_panel([[1.0, 2.0], [1.0, 2.0]])
        d2 = euclidean_matrix(ident, zscore=False, prefer_native=False).values
        assert d2[0, 1] == 0.0

    def test_dtw_diag_and_symmetry(self):
        rng = np.random.default_rng(1)
        p = toy_panel(rng.uniform(1, 5, size=(4, 30)))
        d = dtw_matrix(p, band=10, prefer_native=False).values
        assert np.allclose(np.diag(d), 0.0)
        assert np.array_equal(d, d.T)

    def test_correntropy_properties(self):
        rng = np.random.default_rng(2)
        p = toy_panel(rng.uniform(1, 5, size=(4, 60)))
        v = correntropy_matrix(p, prefer_native=False).values
        assert np.all(v > 0.0) and np.all(v <= 1.0)
        assert np.allclose(np.diag(v), 1.0)

    def test_correntropy_bad_sigma(self):
        p = toy_panel(np.ones((2, 4)) + np.arange(4.0))
        with pytest.raises(DataError):
            correntropy_matrix(p, sigma=0.0)

    def test_all_measures_symmetric_on_random_panels(self):
        rng = np.random.default_rng(3)
        p = toy_panel(rng.uniform(1, 400, size=(6, 64)))
        mats = [pearson_matrix(p).values,
                euclidean_matrix(p, prefer_native=False).values,
                dtw_matrix(p, band=8, prefer_native=False).values,
                correntropy_matrix(p, prefer_native=False).values]
        for m in mats:
            assert np.abs(m - m.T).max() < 1e-9

    def test_leakage_guard(self):
        rng = np.random.default_rng(4)
        p = toy_panel(rng.uniform(1, 5, size=(3, 96)))
        train_end = p.timestamps[48]
        with pytest.raises(LeakageError, match="graph leakage"):
            pearson_matrix(p, period=(p.timestamps[0], p.timestamps[80]),
                           train_end=train_end)

    def test_graph_ignores_posttrain_data(self):
        rng = np.random.default_rng(5)
        vals = rng.uniform(1, 5, size=(3, 96))
        p1 = toy_panel(vals)
        vals2 = vals.copy()
        vals2[:, 48:] *= 7.0
        p2 = toy_panel(vals2)
        end = p1.timestamps[48]
        c1 = pearson_matrix(p1, train_end=end).values
        c2 = pearson_matrix(p2, train_end=end).values
        assert np.array_equal(c1, c2)


class TestSparsify:
    def test_threshold_enumeration_example(self):
        sim = SimilarityMatrix(np.array([[1.0, .9, .1], [.9, 1.0, .2],
                                         [.1, .2, 1.0]]), "pearson")
        g = sparsify(sim, rule="threshold", tau=0.5)
        assert g.edges() == [(0, 1, 0.9)]

    def test_threshold_above_max_warns_empty(self):
        sim = SimilarityMatrix(np.array([[1.0, .3], [.3, 1.0]]), "pearson")
        with pytest.warns(RuntimeWarning, match="edgeless"):
            g = sparsify(sim, rule="threshold", tau=0.95)
        assert g.n_edges == 0

    def test_knn_saturation_complete(self):
        rng = np.random.default_rng(0)
        m = rng.uniform(0.1, 0.9, size=(5, 5))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 1.0)
        g = sparsify(SimilarityMatrix(m, "correntropy"), rule="knn", k=4)
        assert g.n_edges == 10

    def test_threshold_monotone_in_tau(self):
        rng = np.random.default_rng(1)
        m = rng.uniform(0, 1, size=(8, 8))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 1.0)
        sim = SimilarityMatrix(m, "correntropy")
        last = None
        for tau in np.linspace(0.05, 0.95, 12):
            edges = set((a, b) for a, b, _ in sparsify(sim, tau=tau).edges())
            if last is not None:
                assert edges.issubset(last)
            last = edges

    def test_pearson_negative_never_edges(self):
        m = np.array([[1.0, -0.9], [-0.9, 1.0]])
        with pytest.warns(RuntimeWarning, match="edgeless"):
            g = sparsify(SimilarityMatrix(m, "pearson"), tau=-1.0)
        assert g.n_edges == 0

    def test_auto_threshold_targets_degree(self):
        rng = np.random.default_rng(2)
        m = rng.uniform(0, 1, size=(40, 40))
        m = (m + m.T) / 2
        np.fill_diagonal(m, 1.0)
        g = sparsify(SimilarityMatrix(m, "correntropy"), rule="threshold",
                     target_degree=10.0)
        assert abs(g.mean_degree() - 10.0) <= 1.5

    def test_distance_conversion_orders_weights(self):
        # smaller distance must give larger edge weight after conversion
        d = np.array([[0.0, 1.0, 3.0], [1.0, 0.0, 2.0], [3.0, 2.0, 0.0]])
        sim = SimilarityMatrix(d, "euclidean")
        s = sim.to_similarity()
        assert s[0, 1] > s[1, 2] > s[0, 2]


class TestTopologies:
    def test_full_graph_counts(self):
        g = full_graph(2)
        assert g.n_edges == 1
        assert full_graph(228).directed_message_count == 228 * 227

    def test_full_graph_permutation_isomorphic(self):
        g = full_graph(5).dense()
        p = np.random.default_rng(0).permutation(5)
        assert np.array_equal(g[np.ix_(p, p)], g)

    def test_bipartite_message_count(self):
        g = bipartite_graph(4, 2)
        assert g.directed_message_count == 2 * 2 * 4  # 2KN

    def test_bipartite_structure(self):
        g = bipartite_graph(5, 3)
        dense = g.dense()
        assert dense[:5, :5].sum() == 0 and dense[5:, 5:].sum() == 0
        assert np.all(dense[:5, 5:] == 1.0)
        hub = bipartite_graph(6, 1)
        assert hub.adjacency.getnnz(axis=0)[-1] == 6

    def test_bipartite_rejects_internal_edges(self):
        dense = np.zeros((4, 4))
        dense[0, 1] = dense[1, 0] = 1.0
        with pytest.raises(DataError):
            graph_from_dense(dense, kind="bipartite", virtual_nodes=2)


class TestNormalize:
    def test_edgeless_gives_identity(self):
        g = graph_from_dense(np.zeros((4, 4)))
        assert np.array_equal(normalize(g), np.eye(4))

    def test_two_node_complete(self):
        g = full_graph(2)
        assert np.allclose(normalize(g), [[0.5, 0.5], [0.5, 0.5]])

    def test_ring_rows_sum_to_one(self):
        ring = np.zeros((4, 4))
        for i in range(4):
            ring[i, (i + 1) % 4] = ring[(i + 1) % 4, i] = 1.0
        a_hat = normalize(graph_from_dense(ring))
        assert np.allclose(a_hat.sum(axis=1), 1.0)
        assert np.allclose(a_hat @ np.ones(4), 1.0)

    def test_symmetric_and_spectral_radius(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = rng.integers(2, 9)
            dense = rng.uniform(0, 1, size=(n, n)) * (rng.random((n, n)) < 0.5)
            dense = np.triu(dense, 1)
            dense = dense + dense.T
            a_hat = normalize(graph_from_dense(dense))
            assert np.array_equal(a_hat, a_hat.T)
            radius = np.max(np.abs(np.linalg.eigvalsh(a_hat)))
            assert radius <= 1.0 + 1e-9

    def test_isolated_node_survives(self):
        dense = np.zeros((3, 3))
        dense[0, 1] = dense[1, 0] = 1.0
        a_hat = normalize(graph_from_dense(dense))
        assert a_hat[2, 2] == 1.0


class TestGraphIO:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        _, g = synth_panel(10, 100, 2, 0.3712938712, seed=5)
        path = save_graph(g, tmp_path / "g.graph")
        back = load_graph(path)
        assert np.array_equal(back.dense(), g.dense())
        assert back.kind == g.kind and back.n_nodes == g.n_nodes

    def test_round_trip_bipartite(self, tmp_path):
        g = bipartite_graph(4, 2)
        back = load_graph(save_graph(g, tmp_path / "b.graph"))
        assert back.virtual_nodes == 2
        assert np.array_equal(back.dense(), g.dense())

    def test_meta_preserved(self, tmp_path):
        rng = np.random.default_rng(1)
        p = toy_panel(rng.uniform(1, 5, size=(4, 30)))
        g = sparsify(correntropy_matrix(p, prefer_native=False), tau=0.2)
        back = load_graph(save_graph(g, tmp_path / "m.graph"))
        assert back.meta["measure"] == "correntropy"
