"""
Training a graph recurrence
===========================

Trains a small GCGRU on the synthetic panel with the planted graph, shows
the loss curve and a day-ahead forecast against the truth, and prints the
two-level error metrics.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stlfbench import ModelConfig, SplitSpec, TrainConfig, build, load_panel
from stlfbench.graphs import load_graph
from stlfbench.training import evaluate_model, prepare_split_data, train

OUT = Path(__file__).parent / "output"
panel = load_panel(OUT / "demo_panel.npz")      # run demo 01 first
planted = load_graph(OUT / "demo_planted.graph")

# 5 weeks train / 1.5 val / 1.5 test
ts = panel.timestamps
a, b = 5 * 7 * 48, int(6.5 * 7 * 48)
spec = SplitSpec(ts[a], (ts[a], ts[b]),
                 (ts[b], ts[-1] + np.timedelta64(30, "m")))
data = prepare_split_data(panel, spec, w=48, h=48, stride=1)

model = build(ModelConfig("gcgru", window=48, horizon=48, hidden_size=16),
              planted, panel.n_nodes, seed=0)
cfg = TrainConfig(learning_rate=5e-3, batch_size=128, max_epochs=15,
                  patience=6, n_trials=1, steps_per_epoch=12)
model, result = train(model, data, cfg, seed=0)
print(f"trained {result.epochs_run} epochs in {result.wall_time:.0f}s, "
      f"best val loss {result.best_val_loss:.1f}")

ev = evaluate_model(model, data)
print(f"residential: MAE {ev['residential']['mae']:.1f} Wh, "
      f"MAPE {ev['residential']['mape']:.1f} %, "
      f"RMSE {ev['residential']['rmse']:.1f} Wh")
print(f"aggregate:   MAE {ev['aggregate']['mae']:.2f} kWh")

fig, axes = plt.subplots(1, 2, figsize=(12, 4))
axes[0].plot([rec["epoch"] for rec in result.history],
             [rec["val_loss"] for rec in result.history], marker="o")
axes[0].set_xlabel("epoch"), axes[0].set_ylabel("validation loss")
axes[0].set_title("early stopping on validation MAE")

day = slice(0, 48)
hours = np.arange(48) / 2.0
axes[1].plot(hours, ev["truth_wh"][0, day], label="truth")
axes[1].plot(hours, ev["pred_wh"][0, day], label="gcgru day-ahead")
axes[1].set_xlabel("hours into test day"), axes[1].set_ylabel("Wh / 30 min")
axes[1].set_title(f"household {panel.node_ids[0]}")
axes[1].legend()
fig.tight_layout()
fig.savefig(OUT / "04_training.png", dpi=130)
print(f"figure: {OUT / '04_training.png'}")
