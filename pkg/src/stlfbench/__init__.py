"""stlfbench: benchmark graph-based short-term load forecasting.

A numpy/scipy library for day-ahead smart-meter forecasting experiments:
panel ingestion and splits, signal-similarity graph construction, seven
graph forecasters plus four temporal baselines on a shared interface, an
MAE training engine with a seeded multi-trial protocol, and two-level
(household / aggregate) evaluation.
"""

from .errors import (BenchError, ConfigError, DataError, KernelError,
                     LeakageError, ShapeError, TrainingError)
from .graphs import (Graph, SimilarityMatrix, bipartite_graph,
                     correntropy_matrix, dtw_matrix, euclidean_matrix,
                     full_graph, load_graph, normalize, pearson_matrix,
                     save_graph, sparsify)
from .kernels import dtw_distance, pairwise, reference_pairwise
from .metrics import (MetricReport, aggregate_eval, error_histogram,
                      fmt_mean_std, mae, mape, render_tables,
                      residential_metrics, rmse)
from .models import (ModelConfig, build, fit_var, load_checkpoint,
                     save_checkpoint)
from .panel import (LoadPanel, Scaler, SplitSpec, WindowBatch, fit_scaler,
                    ingest_csv, load_panel, make_splits, save_panel,
                    select_cohort, synth_panel, window)
from .training import (TrainConfig, TrialResult, prepare_split_data,
                       run_trials, train, tune)

__version__ = "0.1.0"
