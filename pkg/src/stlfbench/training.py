"""Training engine: MAE loss, early stopping, grid tuning, seeded trials.

Training minimizes the scaled-space loss  mean_batch( sum_{n,t} |x - x̂| ),
restores the parameters of the best validation epoch, and is bit
reproducible given (seed, config, data) in single-thread numeric mode.
The multi-trial protocol reruns the same configuration with seeds
``base_seed + 0..n-1`` and reports mean(std) per metric.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import time
import warnings
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import metrics as metrics_mod
from .autodiff import Tensor
from .errors import ConfigError, LeakageError, TrainingError
from .models import ModelConfig, build
from .panel import LoadPanel, Scaler, SplitSpec, WindowBatch, fit_scaler, window


@dataclasses.dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 15
    n_trials: int = 5
    base_seed: int = 0
    grad_clip: float | None = 5.0
    steps_per_epoch: int | None = None

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 0 <= self.patience < self.max_epochs:
            raise ConfigError("patience must satisfy 0 <= patience < max_epochs")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ConfigError("learning_rate must be > 0 and batch_size >= 1")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)


@dataclasses.dataclass
class TrialResult:
    seed: int
    best_val_loss: float
    epochs_run: int
    wall_time: float
    failed: bool = False
    test_metrics: dict | None = None
    history: list = dataclasses.field(default_factory=list)
    # final-evaluation artifacts (filled by run_trials), kept out of repr
    forecast_wh: np.ndarray | None = dataclasses.field(default=None, repr=False)
    truth_wh: np.ndarray | None = dataclasses.field(default=None, repr=False)
    eval_timestamps: np.ndarray | None = dataclasses.field(default=None, repr=False)


class SplitData:
    """Scaled windows for one split, with an access log for leakage audits."""

    def __init__(self, train: WindowBatch, val: WindowBatch, test: WindowBatch,
                 scaler: Scaler, train_series: np.ndarray,
                 test_raw_targets: np.ndarray, node_ids=None):
        self._batches = {"train": train, "val": val, "test": test}
        self.scaler = scaler
        self._train_series = train_series
        self._test_raw_targets = test_raw_targets
        self.node_ids = node_ids
        self.access_log = []

    def get(self, partition, purpose) -> WindowBatch:
        if partition not in self._batches:
            raise ConfigError(f"unknown partition {partition!r}")
        self.access_log.append((partition, purpose))
        return self._batches[partition]

    def train_series(self, purpose="fit") -> np.ndarray:
        """Contiguous scaled training matrix (N, T_train), for VAR-style fits."""
        self.access_log.append(("train", purpose))
        return self._train_series

    def test_raw_targets(self) -> np.ndarray:
        self.access_log.append(("test", "final-eval"))
        return self._test_raw_targets

    def test_accessed(self) -> bool:
        return any(p == "test" for p, _ in self.access_log)


def prepare_split_data(panel: LoadPanel, spec: SplitSpec, w: int, h: int,
                       stride: int = 1, eval_stride: int | None = None) -> SplitData:
    """Fit the scaler on training rows, window all partitions, scale them."""
    scaler = fit_scaler(panel, spec)
    train, val, test = window(panel, spec, w, h, stride, eval_stride)
    train_series = scaler.transform(
        panel.slice_period(panel.timestamps[0], spec.train_end).values)
    return SplitData(scaler.transform_batch(train), scaler.transform_batch(val),
                     scaler.transform_batch(test), scaler, train_series,
                     test.targets, node_ids=panel.node_ids)


# -- optimizer -----------------------------------------------------------------


class Adam:
    """Adaptive-moment gradient descent; state keyed by parameter name."""

    def __init__(self, params: dict, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p.value -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c)
                                                      + self.eps)


def clip_gradients(params: dict, max_norm: float) -> float:
    with np.errstate(over="ignore"):  # divergent trials may carry inf grads
        total = 0.0
        for p in params.values():
            if p.grad is not None:
                total += float((p.grad * p.grad).sum())
        norm = np.sqrt(total)
        if norm > max_norm:
            scale = max_norm / norm
            for p in params.values():
                if p.grad is not None:
                    p.grad *= scale
    return norm


def mae_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Scaled-space loss: per-window sum of |error|, averaged over the batch."""
    return ad.tmean(ad.tsum(ad.absolute(pred - target), axis=(1, 2)))


def _batch_loss_value(model, batch: WindowBatch, batch_size) -> float:
    """Mean per-window loss over a whole partition (batch-size independent)."""
    total, count = 0.0, 0
    with ad.no_grad():
        for lo in range(0, len(batch), batch_size):
            x = batch.inputs[lo:lo + batch_size]
            y = batch.targets[lo:lo + batch_size]
            pred = model.forward(Tensor(x), train=False)
            total += float(np.abs(pred.value - y).sum(axis=(1, 2)).sum())
            count += x.shape[0]
    return total / count


def train(model, data: SplitData, cfg: TrainConfig, seed: int,
          log_path=None):
    """Fit a neural model; returns (model, TrialResult).

    Stops once validation loss has not improved for ``cfg.patience`` epochs
    and restores the parameters of the best epoch.  A non-finite loss aborts
    the trial, which is reported as failed rather than raised.
    """
    rng = np.random.default_rng((seed, 0xA11CE))
    params = model.params()
    opt = Adam(params, cfg.learning_rate)
    train_batch = data.get("train", "train")
    val_batch = data.get("val", "early-stopping")

    best_val = np.inf
    best_state = model.state_dict()
    stale = 0
    history = []
    started = time.perf_counter()
    epochs_run = 0
    failed = False

    for epoch in range(1, cfg.max_epochs + 1):
        epochs_run = epoch
        order = rng.permutation(len(train_batch))
        if cfg.steps_per_epoch is not None:
            order = order[:cfg.steps_per_epoch * cfg.batch_size]
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x = train_batch.inputs[idx]
            y = train_batch.targets[idx]
            ad.zero_grads(params.values())
            loss = mae_loss(model.forward(Tensor(x), train=True, rng=rng), y)
            value = float(loss.value)
            if not np.isfinite(value):
                failed = True
                break
            loss.backward()
            if cfg.grad_clip is not None:
                clip_gradients(params, cfg.grad_clip)
            opt.step()
            epoch_loss += value
            n_batches += 1
        if failed:
            break
        val_loss = _batch_loss_value(model, val_batch, cfg.batch_size)
        history.append({"epoch": epoch,
                        "train_loss": epoch_loss / max(n_batches, 1),
                        "val_loss": val_loss, "lr": cfg.learning_rate,
                        "time": time.perf_counter() - started})
        if not np.isfinite(val_loss):
            failed = True
            break
        if val_loss < best_val:
            best_val = val_loss
            best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
            # patience == 0 disables early stopping
            if cfg.patience > 0 and stale >= cfg.patience:
                break

    model.load_state_dict(best_state)
    result = TrialResult(seed=seed, best_val_loss=float(best_val),
                         epochs_run=epochs_run,
                         wall_time=time.perf_counter() - started,
                         failed=failed, history=history)
    if log_path is not None:
        with Path(log_path).open("w") as f:
            for rec in history:
                f.write(json.dumps(rec) + "\n")
    return model, result


# -- evaluation --------------------------------------------------------------


def _flatten_windows(arr) -> np.ndarray:
    """(B, N, H) stacked windows -> (N, B*H) series."""
    return np.transpose(arr, (1, 0, 2)).reshape(arr.shape[1], -1)


def evaluate_model(model, data: SplitData) -> dict:
    """Test-set metrics at both levels, plus the raw/forecast series (Wh).

    Forecasts are clamped at zero after inverse scaling (energy per
    interval cannot be negative); the clamp applies uniformly to every
    model.
    """
    test = data.get("test", "final-eval")
    preds = []
    for lo in range(0, len(test), 64):
        preds.append(model.forecast(test.inputs[lo:lo + 64]))
    pred_scaled = np.concatenate(preds, axis=0)
    pred_wh = np.maximum(data.scaler.inverse(pred_scaled), 0.0)
    truth_wh = data.test_raw_targets()
    truth_flat = _flatten_windows(truth_wh)
    pred_flat = _flatten_windows(pred_wh)
    step = np.timedelta64(30, "m")
    eval_ts = np.concatenate(
        [o + step * np.arange(test.targets.shape[2]) for o in test.origins])
    return {
        "residential": metrics_mod.residential_metrics(truth_flat, pred_flat),
        "aggregate": metrics_mod.aggregate_eval(truth_flat, pred_flat),
        "truth_wh": truth_flat, "pred_wh": pred_flat, "timestamps": eval_ts,
    }


def fit_or_train(model, data: SplitData, cfg: TrainConfig, seed: int,
                 log_path=None) -> TrialResult:
    """Dispatch on model kind: gradient training, series fit, or nothing."""
    if model.trainable:
        _, result = train(model, data, cfg, seed, log_path)
        return result
    started = time.perf_counter()
    if hasattr(model, "fit_series"):
        model.fit_series(data.train_series())
    return TrialResult(seed=seed, best_val_loss=float("nan"), epochs_run=0,
                       wall_time=time.perf_counter() - started)


def run_trials(config: ModelConfig, graph, data: SplitData, cfg: TrainConfig,
               n_nodes: int | None = None, log_dir=None):
    """The repeated-trial protocol: identical parameters, seeds
    base_seed..base_seed+n-1; summary strings are ``mean(std)`` per metric.

    Returns (results, summary, report_rows).  Partial failures are kept in
    ``results`` and the summary covers completed trials only, with the count
    noted.
    """
    if n_nodes is None:
        n_nodes = data._batches["train"].inputs.shape[1]
    results = []
    for i in range(cfg.n_trials):
        seed = cfg.base_seed + i
        model = build(config, graph, n_nodes, seed=seed)
        log_path = (Path(log_dir) / f"{config.model_id}-seed{seed}.jsonl"
                    if log_dir else None)
        result = fit_or_train(model, data, cfg, seed, log_path)
        if not result.failed:
            ev = evaluate_model(model, data)
            result.test_metrics = {lvl: ev[lvl]
                                   for lvl in ("residential", "aggregate")}
            result.forecast_wh = ev["pred_wh"]
            result.truth_wh = ev["truth_wh"]
            result.eval_timestamps = ev["timestamps"]
        else:
            warnings.warn(f"trial seed={seed} diverged; recorded as failed",
                          RuntimeWarning)
        results.append(result)
    completed = [r for r in results if not r.failed]
    if not completed:
        raise TrainingError(
            f"all {cfg.n_trials} trials failed for {config.model_id}")
    summary = {"n_completed": len(completed), "n_trials": cfg.n_trials}
    for level in ("residential", "aggregate"):
        for metric in metrics_mod.METRICS:
            values = [r.test_metrics[level][metric] for r in completed]
            summary[f"{level}.{metric}"] = metrics_mod.fmt_mean_std(
                values, metrics_mod.DECIMALS[(level, metric)])
    return results, summary


def collect_report(report, model_id, split_id, results):
    """Append completed trial metrics to a MetricReport."""
    completed = [r for r in results if not r.failed]
    for level in ("residential", "aggregate"):
        for metric in metrics_mod.METRICS:
            report.add(model_id, split_id, level, metric,
                       [r.test_metrics[level][metric] for r in completed])


# -- tuning --------------------------------------------------------------------

MODEL_TUNABLES = {f.name for f in dataclasses.fields(ModelConfig)} - {"model_id"}
TRAIN_TUNABLES = {f.name for f in dataclasses.fields(TrainConfig)}


def tune(config: ModelConfig, grid: dict, panel: LoadPanel, spec: SplitSpec,
         cfg: TrainConfig, graph=None, budget: int | None = None,
         stride: int = 1):
    """Grid search on validation MAE; the test partition is never touched.

    ``grid`` maps hyperparameter names (ModelConfig or TrainConfig fields,
    e.g. learning_rate, batch_size, window) to candidate lists.  ``budget``
    caps the number of combinations, taken in deterministic product order.
    Returns (best ModelConfig, best TrainConfig, records).
    """
    if not grid:
        raise ConfigError("tuning grid must not be empty")
    unknown = set(grid) - MODEL_TUNABLES - TRAIN_TUNABLES
    if unknown:
        raise ConfigError(f"unknown tuning keys: {sorted(unknown)}")
    keys = sorted(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    if budget is not None:
        combos = combos[:budget]
    data_cache = {}
    records = []
    best = None
    for combo in combos:
        assignment = dict(zip(keys, combo))
        model_kw = {k: v for k, v in assignment.items() if k in MODEL_TUNABLES}
        train_kw = {k: v for k, v in assignment.items() if k in TRAIN_TUNABLES}
        trial_config = dataclasses.replace(config, **model_kw)
        trial_cfg = cfg.replace(**train_kw)
        w = trial_config.window
        if w not in data_cache:
            data_cache[w] = prepare_split_data(panel, spec, w,
                                               trial_config.horizon, stride)
        data = data_cache[w]
        model = build(trial_config, graph, panel.n_nodes, seed=trial_cfg.base_seed)
        if model.trainable:
            _, result = train(model, data, trial_cfg, trial_cfg.base_seed)
            score = result.best_val_loss if not result.failed else np.inf
        else:
            if hasattr(model, "fit_series"):
                model.fit_series(data.train_series())
            val = data.get("val", "tuning")
            score = float(np.abs(
                model.forecast(val.inputs) - val.targets).sum(axis=(1, 2)).mean())
        records.append({"assignment": assignment, "val_loss": float(score)})
        if best is None or score < best[0]:
            best = (score, trial_config, trial_cfg)
    for data in data_cache.values():
        if data.test_accessed():
            raise LeakageError("tuning touched the test partition")
    if not np.isfinite(best[0]):
        raise TrainingError(f"all tuning trials failed: {records}")
    return best[1], best[2], records
