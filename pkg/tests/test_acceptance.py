"""Acceptance suite: one test per criterion, each at its stated tolerance.

The heavy criteria (the directional synthetic benchmark and the
graph-formation comparison) train real models and dominate the runtime of
the full test run; everything else is seconds.  A conftest hook prints one
``[acceptance PASS/FAIL]`` line per criterion.
"""

import time

import numpy as np
import pytest

from stlfbench import autodiff as ad
from stlfbench import blocks
from stlfbench.graphs import (correntropy_matrix, dtw_matrix, euclidean_matrix,
                              graph_from_dense, pearson_matrix, sparsify)
from stlfbench.kernels import dtw_distance
from stlfbench.metrics import (aggregate_eval, fmt_mean_std, mae, mape,
                               residential_metrics, rmse)
from stlfbench.models import STGNN_MODELS, ModelConfig, build
from stlfbench.panel import LoadPanel, SplitSpec, make_splits, synth_panel
from stlfbench.training import (TrainConfig, evaluate_model, prepare_split_data,
                                run_trials)

import oracles
from test_blocks import fd_check, weighted_sum
from test_models import signal_graph
from test_panel import toy_panel


# -- shared heavy fixture: the directional synthetic benchmark -----------------

SYNTH_SEED = 42
DIRECTIONAL_TRAIN = TrainConfig(learning_rate=5e-3, batch_size=128,
                                max_epochs=25, patience=8, n_trials=5,
                                base_seed=100, steps_per_epoch=12)


def synth_split(panel):
    """5 weeks train / 1.5 weeks val / 1.5 weeks test from the panel start."""
    ts = panel.timestamps
    step = np.timedelta64(30, "m")
    a, b = 5 * 7 * 48, int(6.5 * 7 * 48)
    return SplitSpec(ts[a], (ts[a], ts[b]), (ts[b], ts[-1] + step))


@pytest.fixture(scope="session")
def directional_runs():
    """GCGRU (planted graph) vs GRU, 5 seeded trials each, on
    synth_panel(N=20, K=4, coupling=0.6, T=8 weeks)."""
    started = time.perf_counter()
    panel, planted = synth_panel(20, 8 * 7 * 48, 4, 0.6, seed=SYNTH_SEED)
    spec = synth_split(panel)
    data = prepare_split_data(panel, spec, w=48, h=48, stride=1)
    out = {"panel": panel, "planted": planted, "spec": spec, "data": data}
    for model_id in ("gru", "gcgru"):
        config = ModelConfig(model_id, window=48, horizon=48, hidden_size=16)
        graph = planted if model_id == "gcgru" else None
        results, summary = run_trials(config, graph, data, DIRECTIONAL_TRAIN)
        out[model_id] = {"results": results, "summary": summary}
    out["elapsed"] = time.perf_counter() - started
    return out


class TestOracleEquivalence:
    def test_gcn_matches_dense_oracle_100_graphs(self):
        started = time.perf_counter()
        rng = np.random.default_rng(0)
        for case in range(100):
            n = int(rng.integers(2, 11))
            d_in, d_out = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            act = ("linear", "relu", "tanh")[case % 3]
            layer = blocks.GCNLayer(rng, d_in, d_out, act)
            a_hat = rng.standard_normal((n, n))
            h = rng.standard_normal((n, d_in))
            got = layer(ad.Tensor(a_hat), ad.Tensor(h)).value
            want = oracles.gcn_dense_oracle(
                a_hat, h, layer._children["lin"].w.value,
                layer._children["lin"].b.value, act)
            assert np.max(np.abs(got - want)) < 1e-6
        assert time.perf_counter() - started < 10.0


class TestDtwCorrectness:
    def test_dp_equals_exhaustive_enumeration_200_cases(self):
        started = time.perf_counter()
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = rng.uniform(-5, 5, size=int(rng.integers(1, 6)))
            b = rng.uniform(-5, 5, size=int(rng.integers(1, 6)))
            assert dtw_distance(a, b) == pytest.approx(
                oracles.dtw_exhaustive(a, b), abs=1e-12)
        assert time.perf_counter() - started < 30.0


class TestGradientChecks:
    """Every neural block vs central finite differences, rel error < 1e-4,
    20 random small shapes each (N <= 5, d <= 4); under 2 minutes total."""

    N_SHAPES = 20

    def _rng(self, i):
        return np.random.default_rng(1000 + i)

    def test_linear_and_mlp(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            d_in, d_h, d_out = rng.integers(1, 5, size=3)
            mlp = blocks.MLP(rng, [int(d_in), int(d_h), int(d_out)])
            x = ad.Tensor(rng.standard_normal((2, int(d_in))), requires_grad=True)
            fd_check(dict(mlp.params(), x=x), lambda m=mlp, x=x: weighted_sum(m(x)))

    def test_gcn_layer(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            n, d_in, d_out = int(rng.integers(2, 6)), int(rng.integers(1, 5)), \
                int(rng.integers(1, 5))
            layer = blocks.GCNLayer(rng, d_in, d_out, ("linear", "relu", "tanh")[i % 3])
            a = ad.Tensor(rng.standard_normal((n, n)), requires_grad=True)
            h = ad.Tensor(rng.standard_normal((n, d_in)), requires_grad=True)
            fd_check(dict(layer.params(), a=a, h=h),
                     lambda l=layer, a=a, h=h: weighted_sum(l(a, h)))

    @pytest.mark.parametrize("graph", [False, True])
    def test_recurrent_cell(self, graph):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            n, d_x, d_h, t = (int(rng.integers(2, 6)), int(rng.integers(1, 4)),
                              int(rng.integers(1, 5)), int(rng.integers(2, 5)))
            cell = blocks.RecurrentCell(rng, d_x, d_h, graph=graph)
            a = ad.Tensor(rng.standard_normal((n, n)), requires_grad=True) \
                if graph else None
            x = ad.Tensor(rng.standard_normal((1, t, n, d_x)), requires_grad=True)
            params = dict(cell.params(), x=x)
            if graph:
                params["a"] = a
            fd_check(params, lambda c=cell, x=x, a=a: weighted_sum(c.run(x, a)))

    def test_temporal_conv(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            d_in, d_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            layer = blocks.TemporalConvLayer(rng, d_in, d_out, kernel_size=2,
                                             dilation=int(rng.integers(1, 3)))
            x = ad.Tensor(rng.standard_normal((1, 6, 2, d_in)), requires_grad=True)
            fd_check(dict(layer.params(), x=x),
                     lambda l=layer, x=x: weighted_sum(
                         blocks.tcn_forward(x, [l])))

    def test_node_embedding_adaptive_adjacency(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            emb = blocks.NodeEmbedding(rng, int(rng.integers(2, 6)),
                                       int(rng.integers(1, 5)))
            fd_check(emb.params(),
                     lambda e=emb: weighted_sum(e.adaptive_adjacency()))

    def test_attention_aggregator(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            m, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
            agg = blocks.AttentionAggregator(rng, d, hidden=int(rng.integers(1, 4)))
            mask = (rng.random((m, m)) < 0.6).astype(float)
            np.fill_diagonal(mask, 0.0)
            h = ad.Tensor(rng.standard_normal((1, m, d)), requires_grad=True)
            fd_check(dict(agg.params(), h=h),
                     lambda a=agg, h=h, mk=mask: weighted_sum(a(h, mk)))

    def test_decoder_and_layernorm(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            d, horizon = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            dec = blocks.Decoder(rng, d, horizon)
            h = ad.Tensor(rng.standard_normal((3, d)), requires_grad=True)
            fd_check(dict(dec.params(), h=h), lambda d_=dec, h=h: weighted_sum(d_(h)))
            if d >= 2:
                ln = blocks.LayerNorm(d)
                x = ad.Tensor(rng.standard_normal((2, d)) * 3, requires_grad=True)
                fd_check(dict(ln.params(), x=x),
                         lambda l=ln, x=x: weighted_sum(l(x)), tol=2e-4)

    def test_encoder_layer(self):
        for i in range(self.N_SHAPES):
            rng = self._rng(i)
            d = 2 * int(rng.integers(1, 3))
            layer = blocks.SelfAttentionEncoderLayer(rng, d, n_heads=2,
                                                     d_ff=int(rng.integers(2, 5)))
            x = ad.Tensor(rng.standard_normal((1, 3, d)), requires_grad=True)
            fd_check(dict(layer.params(), x=x),
                     lambda l=layer, x=x: weighted_sum(l(x)), tol=2e-4)

    def test_total_runtime_budget(self, request):
        # the per-block tests above run in this same session; this guard
        # re-runs a representative subset and checks the 2-minute budget
        started = time.perf_counter()
        self.test_gcn_layer()
        self.test_recurrent_cell(True)
        assert time.perf_counter() - started < 120.0


class TestMetricSuite:
    def test_hand_oracles_50_pairs_and_jensen(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n, t = int(rng.integers(1, 6)), int(rng.integers(1, 25))
            truth = rng.uniform(0.5, 10, size=(n, t))
            pred = truth + rng.normal(0, 1.5, size=(n, t))
            assert abs(mae(truth, pred) - oracles.mae_loops(truth, pred)) < 1e-9
            assert abs(mape(truth, pred) - oracles.mape_loops(truth, pred)) < 1e-9
            assert abs(rmse(truth, pred) - oracles.rmse_loops(truth, pred)) < 1e-9
            assert rmse(truth, pred) >= mae(truth, pred)

    def test_perfect_forecast_exact_zeros(self):
        x = np.random.default_rng(3).uniform(1, 9, size=(5, 40))
        assert mae(x, x) == 0.0 and mape(x, x) == 0.0 and rmse(x, x) == 0.0


class TestSplitProtocol:
    def test_three_boundaries_and_peak_membership(self):
        n = 365 * 48
        panel = toy_panel(np.ones((2, n)) + np.arange(n) % 5)
        splits = make_splits(panel)
        assert [s.train_end for s in splits] == [
            np.datetime64("2013-07-01"), np.datetime64("2013-09-01"),
            np.datetime64("2013-11-01")]
        for s in splits:
            # validation is the month right after training, test the next
            assert s.val_period[0] == s.train_end
            assert s.test_period[0] == s.val_period[1]
        peak = np.datetime64("2013-12-23T19:00")
        assert splits[2].test_period[0] <= peak < splits[2].test_period[1]


class TestDegeneracyEquivalence:
    def test_gcgru_edgeless_equals_gru(self):
        rng = np.random.default_rng(4)
        n, w, h = 6, 48, 12
        gru = build(ModelConfig("gru", window=w, horizon=h, hidden_size=8),
                    None, n, seed=9)
        edgeless = graph_from_dense(np.zeros((n, n)), kind="signal")
        gcgru = build(ModelConfig("gcgru", window=w, horizon=h, hidden_size=8),
                      edgeless, n, seed=77)
        gcgru.load_state_dict(gru.state_dict())
        for _ in range(5):
            x = rng.standard_normal((3, n, w))
            assert np.max(np.abs(gcgru.forecast(x) - gru.forecast(x))) < 1e-6


class TestPermutationEquivariance:
    @pytest.mark.parametrize("model_id", STGNN_MODELS)
    def test_ten_random_permutations_bitwise(self, model_id):
        rng = np.random.default_rng(5)
        n, w, h, seed = 6, 48, 8, 21
        cfg = ModelConfig(model_id, window=w, horizon=h, hidden_size=8,
                          d_embed=4, d_ff=16, channels=6, k_virtual=3)
        graph = signal_graph(n, seed=2)
        base = build(cfg, graph if cfg.graph_source == "signal" else None,
                     n, seed=seed)
        x = rng.standard_normal((2, n, w))
        want = base.forecast(x)
        for trial in range(10):
            p = np.random.default_rng(100 + trial).permutation(n)
            if cfg.graph_source == "signal":
                dense = graph.dense()
                pg = graph_from_dense(dense[np.ix_(p, p)], kind="signal")
                other = build(cfg, pg, n, seed=seed)
            else:
                other = build(cfg, None, n, seed=seed)
            other.load_state_dict(base.state_dict())
            if hasattr(other, "embedding"):
                other.embedding.e.value[...] = base.embedding.e.value[p]
            got = other.forecast(x[:, p])
            assert np.array_equal(got, want[:, p]), model_id


class TestDirectionalBenchmark:
    def test_gcgru_beats_gru_in_at_least_4_of_5_trials(self, directional_runs):
        gru = [r.test_metrics["residential"]["mae"]
               for r in directional_runs["gru"]["results"]]
        gcgru = [r.test_metrics["residential"]["mae"]
                 for r in directional_runs["gcgru"]["results"]]
        wins = sum(g < b for g, b in zip(gcgru, gru))
        print(f"\nresidential MAE (Wh)  gru: {[f'{v:.1f}' for v in gru]}  "
              f"gcgru: {[f'{v:.1f}' for v in gcgru]}  wins: {wins}/5")
        print(f"summary  gru {directional_runs['gru']['summary']['residential.mae']}"
              f"  gcgru {directional_runs['gcgru']['summary']['residential.mae']}")
        assert wins >= 4

    def test_runtime_within_30_minutes(self, directional_runs):
        assert directional_runs["elapsed"] < 1800.0


class TestAggregateBehavior:
    def test_aggregate_by_summation_and_triangle_inequality(self, directional_runs):
        data = directional_runs["data"]
        naive = build(ModelConfig("seasonal_naive", window=48, horizon=48),
                      None, 20)
        naive_ev = evaluate_model(naive, data)
        gcgru_best = min(
            (r for r in directional_runs["gcgru"]["results"] if not r.failed),
            key=lambda r: r.best_val_loss)
        truth, pred = gcgru_best.truth_wh, gcgru_best.forecast_wh
        agg = aggregate_eval(truth, pred)
        # aggregation is the plain sum of residential forecasts, in kWh
        manual = {
            "mae": mae(truth.sum(0, keepdims=True) / 1000.0,
                       pred.sum(0, keepdims=True) / 1000.0),
            "rmse": rmse(truth.sum(0, keepdims=True) / 1000.0,
                         pred.sum(0, keepdims=True) / 1000.0),
        }
        assert agg["mae"] == pytest.approx(manual["mae"], abs=1e-12)
        assert agg["rmse"] == pytest.approx(manual["rmse"], abs=1e-12)
        bound = np.abs(truth - pred).sum(axis=0).mean() / 1000.0
        assert agg["mae"] <= bound + 1e-12
        print(f"\naggregate MAE (kWh)  gcgru {agg['mae']:.3f}  seasonal_naive "
              f"{naive_ev['aggregate']['mae']:.3f}  (reported, not asserted)")


class TestGraphFormationComparability:
    def test_four_variants_feed_gcgru(self, directional_runs):
        panel = directional_runs["panel"]
        spec = directional_runs["spec"]
        data = directional_runs["data"]
        cfg = TrainConfig(learning_rate=5e-3, batch_size=128, max_epochs=8,
                          patience=7, n_trials=2, base_seed=300,
                          steps_per_epoch=8)
        # perturbed copy: only val/test differ -> graphs must be identical
        perturbed_vals = panel.values.copy()
        cut = panel.index_of(spec.train_end)
        perturbed_vals[:, cut:] *= 1.7
        perturbed = LoadPanel(perturbed_vals, panel.node_ids, panel.timestamps)

        builders = {
            "pearson": lambda p: pearson_matrix(p, train_end=spec.train_end),
            "euclidean": lambda p: euclidean_matrix(p, train_end=spec.train_end,
                                                    prefer_native=False),
            "dtw": lambda p: dtw_matrix(p, band=48, train_end=spec.train_end,
                                        prefer_native=False),
            "correntropy": lambda p: correntropy_matrix(
                p, train_end=spec.train_end, prefer_native=False),
        }
        rows = {}
        for measure, make_sim in builders.items():
            graph = sparsify(make_sim(panel), rule="threshold", target_degree=6.0)
            again = sparsify(make_sim(perturbed), rule="threshold",
                             target_degree=6.0)
            assert np.array_equal(graph.dense(), again.dense()), \
                f"{measure} graph depends on post-training data"
            config = ModelConfig("gcgru", window=48, horizon=48, hidden_size=12)
            results, summary = run_trials(config, graph, data, cfg)
            assert summary["n_completed"] == cfg.n_trials
            rows[measure] = {
                m: fmt_mean_std([r.test_metrics["residential"][m]
                                 for r in results], 1)
                for m in ("mae", "mape", "rmse")}
        print("\nGCGRU by graph formation (residential, synthetic):")
        print(f"{'formation':<12} {'MAE (Wh)':<12} {'MAPE (%)':<12} {'RMSE (Wh)':<12}")
        for measure, row in rows.items():
            print(f"{measure:<12} {row['mae']:<12} {row['mape']:<12} "
                  f"{row['rmse']:<12}")
        means = [float(row["mae"].split("(")[0]) for row in rows.values()]
        print(f"spread of MAE means: {max(means) - min(means):.2f} Wh")


class TestTrialStatistics:
    def test_mean_std_formatting_convention(self):
        assert fmt_mean_std([149.0, 149.2, 148.8, 149.1, 148.9], 1) == "149.0(0.1)"
        assert fmt_mean_std([5.0], 1) == "5.0(0.0)"
