"""
A miniature benchmark
=====================

Runs the repeated-trial protocol for a naive baseline, a per-node
recurrence, and the same recurrence with the planted graph, then renders
the highlighted comparison table.  A desk-scale version of the full
benchmark pipeline; the CLI command `stlfbench benchmark` drives the same
machinery from a config file.
"""

from pathlib import Path

import numpy as np

from stlfbench import (MetricReport, ModelConfig, TrainConfig, load_panel,
                       render_tables)
from stlfbench.graphs import load_graph
from stlfbench.panel import SplitSpec
from stlfbench.training import collect_report, prepare_split_data, run_trials

OUT = Path(__file__).parent / "output"
panel = load_panel(OUT / "demo_panel.npz")      # run demo 01 first
planted = load_graph(OUT / "demo_planted.graph")

ts = panel.timestamps
a, b = 5 * 7 * 48, int(6.5 * 7 * 48)
spec = SplitSpec(ts[a], (ts[a], ts[b]),
                 (ts[b], ts[-1] + np.timedelta64(30, "m")))
data = prepare_split_data(panel, spec, w=48, h=48, stride=1)

cfg = TrainConfig(learning_rate=5e-3, batch_size=128, max_epochs=12,
                  patience=6, n_trials=2, base_seed=0, steps_per_epoch=12)

report = MetricReport()
for model_id in ("seasonal_naive", "gru", "gcgru"):
    mc = ModelConfig(model_id, window=48, horizon=48, hidden_size=16)
    graph = planted if mc.graph_source == "signal" else None
    results, summary = run_trials(mc, graph, data, cfg)
    collect_report(report, model_id, 1, results)
    print(f"{model_id:<15} residential MAE {summary['residential.mae']:<12} "
          f"aggregate MAE {summary['aggregate.mae']}")

print()
print(render_tables(report))
(OUT / "05_report.csv").write_text(report.to_csv())
print(f"report: {OUT / '05_report.csv'}")
