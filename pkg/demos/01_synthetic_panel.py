"""
Synthetic smart-meter panels
============================

Generates a clustered synthetic panel, looks at its daily/weekly structure,
and saves the cache + planted graph for the other demos.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from stlfbench import save_graph, save_panel, synth_panel

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# 20 households in 4 clusters over 8 weeks of half-hours
panel, planted = synth_panel(n_nodes=20, n_steps=8 * 7 * 48, k_clusters=4,
                             coupling=0.6, seed=42)
print(f"panel: N={panel.n_nodes} T={panel.n_steps}, "
      f"values {panel.values.min():.0f}..{panel.values.max():.0f} Wh")
print(f"planted graph: {planted.n_edges} edges, "
      f"mean degree {planted.mean_degree():.1f}")

# two days of three households from different clusters
fig, axes = plt.subplots(2, 1, figsize=(10, 6))
two_days = slice(0, 2 * 48)
hours = np.arange(2 * 48) / 2.0
for node in (0, 5, 10):
    axes[0].plot(hours, panel.values[node, two_days], label=panel.node_ids[node])
axes[0].set_xlabel("hours"), axes[0].set_ylabel("Wh / 30 min")
axes[0].set_title("two days, one household per cluster")
axes[0].legend()

# cluster structure shows up in the correlation matrix
corr = np.corrcoef(panel.values)
im = axes[1].imshow(corr, cmap="viridis", vmin=0, vmax=1)
axes[1].set_title("pairwise correlation (block structure = planted clusters)")
fig.colorbar(im, ax=axes[1])
fig.tight_layout()
fig.savefig(OUT / "01_panel.png", dpi=130)
print(f"figure: {OUT / '01_panel.png'}")

save_panel(panel, OUT / "demo_panel")
save_graph(planted, OUT / "demo_planted.graph")
print(f"cache: {OUT / 'demo_panel.npz'} (+ .json sidecar)")
