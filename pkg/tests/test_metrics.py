import numpy as np
import pytest

from stlfbench.errors import DataError
from stlfbench.metrics import (MetricReport, aggregate_eval, error_histogram,
                               fmt_mean_std, mae, mape, population_std,
                               render_tables, residential_metrics, rmse,
                               skewness)

import oracles


class TestMetricFormulas:
    def test_perfect_forecast_exact_zeros(self):
        x = np.random.default_rng(0).uniform(1, 9, size=(4, 30))
        assert mae(x, x) == 0.0
        assert mape(x, x) == 0.0
        assert rmse(x, x) == 0.0

    def test_hand_example(self):
        truth = np.array([[1.0, 2.0]])
        pred = np.array([[2.0, 4.0]])
        assert mae(truth, pred) == pytest.approx(1.5)
        assert mape(truth, pred) == pytest.approx(100.0)
        assert rmse(truth, pred) == pytest.approx(np.sqrt(2.5))

    def test_constant_error_equalizes_mae_rmse(self):
        truth = np.ones((3, 8)) * 4
        pred = truth - 2.5
        assert mae(truth, pred) == pytest.approx(2.5)
        assert rmse(truth, pred) == pytest.approx(2.5)

    def test_matches_loop_oracles_50_random(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n, t = rng.integers(1, 6), rng.integers(1, 20)
            truth = rng.uniform(0.5, 10, size=(n, t))
            pred = truth + rng.normal(0, 1, size=(n, t))
            assert abs(mae(truth, pred) - oracles.mae_loops(truth, pred)) < 1e-9
            assert abs(mape(truth, pred) - oracles.mape_loops(truth, pred)) < 1e-9
            assert abs(rmse(truth, pred) - oracles.rmse_loops(truth, pred)) < 1e-9
            assert rmse(truth, pred) >= mae(truth, pred)

    def test_unit_consistency(self):
        rng = np.random.default_rng(2)
        truth = rng.uniform(1, 5, size=(3, 9))
        pred = truth + rng.normal(0, 1, size=(3, 9))
        c = 7.3
        assert mae(c * truth, c * pred) == pytest.approx(c * mae(truth, pred))
        assert rmse(c * truth, c * pred) == pytest.approx(c * rmse(truth, pred))
        assert mape(c * truth, c * pred) == pytest.approx(mape(truth, pred))

    def test_zero_truth_mape_fatal_with_location(self):
        truth = np.ones((2, 3))
        truth[1, 2] = 0.0
        with pytest.raises(DataError, match=r"node 1, t 2"):
            mape(truth, truth + 1)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            mae(np.ones((2, 3)), np.ones((3, 2)))


class TestAggregate:
    def test_offsetting_errors_cancel(self):
        truth = np.ones((2, 5)) * 100
        pred = truth.copy()
        pred[0] += 5
        pred[1] -= 5
        assert aggregate_eval(truth, pred)["mae"] == 0.0

    def test_triangle_inequality(self):
        rng = np.random.default_rng(0)
        truth = rng.uniform(50, 500, size=(6, 40))
        pred = truth + rng.normal(0, 30, size=(6, 40))
        agg = aggregate_eval(truth, pred)["mae"]
        bound = np.abs(truth - pred).sum(axis=0).mean() / 1000.0
        assert agg <= bound + 1e-12

    def test_single_household_unit_conversion(self):
        rng = np.random.default_rng(1)
        truth = rng.uniform(100, 900, size=(1, 30))
        pred = truth + rng.normal(0, 20, size=(1, 30))
        res = residential_metrics(truth, pred)
        agg = aggregate_eval(truth, pred)
        assert agg["mae"] == pytest.approx(res["mae"] / 1000.0)
        assert agg["rmse"] == pytest.approx(res["rmse"] / 1000.0)
        assert agg["mape"] == pytest.approx(res["mape"])


class TestTrialStatistics:
    def test_paper_style_formatting(self):
        values = [149.0, 149.2, 148.8, 149.1, 148.9]
        assert fmt_mean_std(values, 1) == "149.0(0.1)"

    def test_population_std_convention(self):
        values = [149.0, 149.2, 148.8, 149.1, 148.9]
        assert population_std(values) == pytest.approx(
            oracles.population_std(values))

    def test_single_trial_zero_std(self):
        assert fmt_mean_std([5.25], 2) == "5.25(0.00)"


class TestRenderTables:
    def build_report(self):
        rep = MetricReport()
        grid = {"seasonal_naive": 150.0, "var": 160.0, "gru": 120.0,
                "transformer": 121.0, "gcgru": 110.0, "agcrn": 130.0}
        for model, v in grid.items():
            for metric, scale in (("mae", 1.0), ("mape", 0.3), ("rmse", 2.0)):
                rep.add(model, 3, "residential", metric, [v * scale] * 2)
        return rep

    def test_stgnn_beats_benchmarks_flagged(self):
        text = render_tables(self.build_report())
        line = [l for l in text.splitlines() if l.startswith("gcgru")][0]
        assert "*_110.0(0.0)_*" in line.replace(" ", "")
        agcrn_line = [l for l in text.splitlines() if l.startswith("agcrn")][0]
        assert "*" not in agcrn_line  # 130 does not beat gru's 120

    def test_single_model_marked_best_everywhere(self):
        rep = MetricReport()
        for metric in ("mae", "mape", "rmse"):
            rep.add("gru", 1, "residential", metric, [3.0])
        text = render_tables(rep)
        assert text.count("_") >= 6

    def test_ties_both_marked(self):
        rep = MetricReport()
        for model in ("gru", "gcgru"):
            for metric in ("mae", "mape", "rmse"):
                rep.add(model, 1, "aggregate", metric, [4.0])
        text = render_tables(rep)
        marked = [l for l in text.splitlines() if "_4.0" in l]
        assert len(marked) == 2

    def test_missing_cell_renders_dash_with_warning(self):
        rep = MetricReport()
        for metric in ("mae", "mape", "rmse"):
            rep.add("gru", 1, "residential", metric, [3.0])
        rep.add("gcgru", 1, "residential", "mae", [2.0])
        with pytest.warns(RuntimeWarning, match="missing cell"):
            text = render_tables(rep)
        assert "—" in text

    def test_csv_round_trip(self):
        rep = self.build_report()
        back = MetricReport.from_csv(rep.to_csv())
        for r in rep.rows:
            b = back.row(r.model_id, r.split, r.level, r.metric)
            assert b.mean == pytest.approx(r.mean)
            assert b.std == pytest.approx(r.std)
            assert b.n_trials == r.n_trials


class TestErrorHistogram:
    def grid(self, n):
        return (np.datetime64("2013-12-23T00:00") +
                np.timedelta64(30, "m") * np.arange(n))

    def test_perfect_model_all_zero(self):
        truth = np.random.default_rng(0).uniform(10, 99, size=(5, 48))
        ts = self.grid(48)
        hist = error_histogram(truth, {"perfect": truth.copy()}, ts, ts[38])
        assert np.all(hist.errors["perfect"] == 0.0)

    def test_constant_shift(self):
        truth = np.random.default_rng(1).uniform(10, 99, size=(4, 10))
        ts = self.grid(10)
        hist = error_histogram(truth, {"low": truth - 10.0}, ts, ts[3])
        assert np.allclose(hist.errors["low"], -10.0)
        assert len(hist.errors["low"]) == 4

    def test_skewness_sign_matches_moment_oracle(self):
        sample = np.array([-3.0, -2.0, -1.0, 0.0, 6.0])
        m3 = ((sample - sample.mean()) ** 3).mean()
        assert skewness(sample) > 0 and m3 > 0

    def test_off_grid_timestamp_fatal(self):
        truth = np.ones((3, 5))
        ts = self.grid(5)
        with pytest.raises(DataError, match="not on the evaluation grid"):
            error_histogram(truth, {"m": truth}, ts,
                            ts[0] + np.timedelta64(7, "m"))

    def test_csv_export_lists_every_household(self):
        truth = np.ones((3, 5))
        ts = self.grid(5)
        hist = error_histogram(truth, {"a": truth + 1, "b": truth - 1},
                               ts, ts[2], node_ids=("x", "y", "z"))
        lines = hist.to_csv().strip().splitlines()
        assert len(lines) == 1 + 6
        assert hist.diagnostics["a"]["skewness"] == 0.0
