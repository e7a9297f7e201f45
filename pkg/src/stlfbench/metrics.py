"""Error metrics, aggregate-level evaluation, histograms, and result tables.

Residential metrics run on the raw N x T matrices in Wh; aggregate metrics
run on the summed series converted to kWh.  Reports carry mean(std) over
trials with the formatting conventions of the benchmark tables
(residential: 1 decimal Wh; aggregate: 2 decimals kWh; MAPE: 1 decimal %).
"""

from __future__ import annotations

import dataclasses
import io
import warnings

import numpy as np

from .errors import DataError
from .models import BENCHMARK_MODELS, STGNN_MODELS

METRICS = ("mae", "mape", "rmse")
LEVELS = ("residential", "aggregate")

#: decimals used when rendering mean(std) strings
DECIMALS = {
    ("residential", "mae"): 1, ("residential", "rmse"): 1,
    ("residential", "mape"): 1,
    ("aggregate", "mae"): 2, ("aggregate", "rmse"): 2,
    ("aggregate", "mape"): 1,
}


def _check_shapes(truth, pred):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape:
        raise DataError(f"shape mismatch: truth {truth.shape}, pred {pred.shape}")
    return truth, pred


def mae(truth, pred) -> float:
    truth, pred = _check_shapes(truth, pred)
    return float(np.abs(truth - pred).mean())


def mape(truth, pred) -> float:
    """Mean absolute percentage error, in percent.

    Defined only for strictly nonzero truth (the benchmark cohort is chosen
    so this holds); zero entries are a hard error naming the offenders.
    """
    truth, pred = _check_shapes(truth, pred)
    zero = np.argwhere(truth == 0.0)
    if len(zero):
        shown = ", ".join(f"(node {i}, t {j})" for i, j in zero[:5])
        raise DataError(f"MAPE undefined: zero truth at {shown}"
                        + (" …" if len(zero) > 5 else ""))
    return float(np.abs((truth - pred) / truth).mean() * 100.0)


def rmse(truth, pred) -> float:
    truth, pred = _check_shapes(truth, pred)
    return float(np.sqrt(((truth - pred) ** 2).mean()))


def residential_metrics(truth_wh, pred_wh) -> dict:
    """All three metrics on per-household series (Wh)."""
    return {"mae": mae(truth_wh, pred_wh),
            "mape": mape(truth_wh, pred_wh),
            "rmse": rmse(truth_wh, pred_wh)}


def aggregate_eval(truth_wh, pred_wh) -> dict:
    """Metrics on the summed household series, in kWh.

    Aggregation simply sums the residential forecasts; no separate model is
    trained at this level.
    """
    truth_wh, pred_wh = _check_shapes(truth_wh, pred_wh)
    truth_kwh = truth_wh.sum(axis=0, keepdims=True) / 1000.0
    pred_kwh = pred_wh.sum(axis=0, keepdims=True) / 1000.0
    return {"mae": mae(truth_kwh, pred_kwh),
            "mape": mape(truth_kwh, pred_kwh),
            "rmse": rmse(truth_kwh, pred_kwh)}


def population_std(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(((values - values.mean()) ** 2).mean()))


def fmt_mean_std(values, decimals) -> str:
    """``mean(std)`` with the table convention; std is population (÷n)."""
    values = np.asarray(values, dtype=np.float64)
    return f"{values.mean():.{decimals}f}({population_std(values):.{decimals}f})"


# -- report -----------------------------------------------------------------


@dataclasses.dataclass
class MetricRow:
    model_id: str
    split: int
    level: str
    metric: str
    values: list  # one entry per completed trial

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return population_std(self.values)

    @property
    def n_trials(self) -> int:
        return len(self.values)

    def formatted(self) -> str:
        return fmt_mean_std(self.values, DECIMALS[(self.level, self.metric)])


class MetricReport:
    """Rows keyed by (model_id, split, level, metric)."""

    def __init__(self, rows=None):
        self.rows = list(rows or [])

    def add(self, model_id, split, level, metric, values):
        self.rows.append(MetricRow(model_id, split, level, metric,
                                   [float(v) for v in values]))

    def row(self, model_id, split, level, metric) -> MetricRow | None:
        for r in self.rows:
            if (r.model_id, r.split, r.level, r.metric) == \
                    (model_id, split, level, metric):
                return r
        return None

    def models(self):
        seen = []
        for r in self.rows:
            if r.model_id not in seen:
                seen.append(r.model_id)
        return seen

    def splits(self):
        return sorted({r.split for r in self.rows})

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("model_id,split,level,metric,mean,std,n_trials\n")
        for r in self.rows:
            buf.write(f"{r.model_id},{r.split},{r.level},{r.metric},"
                      f"{r.mean:.10g},{r.std:.10g},{r.n_trials}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text) -> "MetricReport":
        rows = []
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        if header[:4] != ["model_id", "split", "level", "metric"]:
            raise DataError("unrecognized metric report header")
        for line in lines[1:]:
            model_id, split, level, metric, mean_s, std_s, n_s = line.split(",")
            # round-trip loses per-trial values; represent mean/std faithfully
            n = int(n_s)
            mean_v, std_v = float(mean_s), float(std_s)
            if n >= 2:
                values = [mean_v - std_v] + [mean_v] * (n - 2) + [mean_v + std_v]
            else:
                values = [mean_v]
            rows.append(MetricRow(model_id, int(split), level, metric, values))
        return cls(rows)


def render_tables(report: MetricReport) -> str:
    """Human-readable benchmark tables with the paper-style highlighting.

    Per (split, level, metric) column the best value is marked ``_x_``
    (ties all marked); a graph model beating all four temporal benchmarks is
    marked ``*x*``.  Missing cells render as an em dash with a warning.
    """
    out = []
    for level in LEVELS:
        splits = [s for s in report.splits()
                  if any(r.level == level for r in report.rows if r.split == s)]
        if not splits:
            continue
        unit = "Wh" if level == "residential" else "kWh"
        models = [m for m in report.models()
                  if any(r.level == level for r in report.rows if r.model_id == m)]
        header = ["model"] + [f"s{s}:{m.upper()}({unit if m != 'mape' else '%'})"
                              for s in splits for m in METRICS]
        rows_text = []
        for model in models:
            cells = [model]
            for split in splits:
                for metric in METRICS:
                    cells.append(_cell(report, model, split, level, metric, models))
            rows_text.append(cells)
        widths = [max(len(r[i]) for r in [header] + rows_text)
                  for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths))
                  for r in rows_text]
        title = f"== {level} level =="
        out.append("\n".join([title] + lines))
    return "\n\n".join(out) + "\n"


def _cell(report, model, split, level, metric, models):
    row = report.row(model, split, level, metric)
    if row is None:
        warnings.warn(f"missing cell ({model}, split {split}, {level}, "
                      f"{metric})", RuntimeWarning)
        return "—"
    text = row.formatted()
    column = {m: report.row(m, split, level, metric) for m in models}
    means = {m: r.mean for m, r in column.items() if r is not None}
    best = min(means.values())
    if row.mean == best:
        text = f"_{text}_"
    if model in STGNN_MODELS:
        bench = [means[m] for m in BENCHMARK_MODELS if m in means]
        if bench and row.mean < min(bench):
            text = f"*{text}*"
    return text


# -- error histogram -----------------------------------------------------------


@dataclasses.dataclass
class ErrorHistogram:
    timestamp: np.datetime64
    node_ids: tuple
    errors: dict          # model_id -> (N,) forecast - truth, Wh
    bin_edges: np.ndarray
    diagnostics: dict     # model_id -> {mean_minus_median, skewness}

    def counts(self, model_id) -> np.ndarray:
        return np.histogram(self.errors[model_id], bins=self.bin_edges)[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("model_id,node_id,error_Wh\n")
        for model_id, errs in self.errors.items():
            for node, e in zip(self.node_ids, errs):
                buf.write(f"{model_id},{node},{e:.10g}\n")
        return buf.getvalue()


def skewness(values) -> float:
    """Population Fisher skewness (third standardized moment)."""
    values = np.asarray(values, dtype=np.float64)
    centered = values - values.mean()
    s = np.sqrt((centered ** 2).mean())
    if s == 0.0:
        return 0.0
    return float((centered ** 3).mean() / s ** 3)


def error_histogram(truth_wh, preds_wh, timestamps, when, bins=20,
                    node_ids=None) -> ErrorHistogram:
    """Per-household forecast errors of each model at one timestamp.

    ``truth_wh`` is (N, T) aligned with ``timestamps``; ``preds_wh`` maps
    model_id to an equally shaped prediction matrix.  Left-skew diagnostics
    (mean - median and skewness) support the underestimation analysis of
    consumption spikes.
    """
    timestamps = np.asarray(timestamps, dtype="datetime64[ns]")
    when = np.datetime64(when)
    hits = np.flatnonzero(timestamps == when)
    if not len(hits):
        raise DataError(f"timestamp {when} not on the evaluation grid")
    col = int(hits[0])
    truth_col = np.asarray(truth_wh, dtype=np.float64)[:, col]
    n = truth_col.shape[0]
    node_ids = tuple(node_ids) if node_ids is not None else tuple(
        str(i) for i in range(n))
    errors, diagnostics = {}, {}
    for model_id, pred in preds_wh.items():
        err = np.asarray(pred, dtype=np.float64)[:, col] - truth_col
        if err.shape != (n,):
            raise DataError(f"{model_id}: prediction shape mismatch")
        errors[model_id] = err
        diagnostics[model_id] = {
            "mean_minus_median": float(err.mean() - np.median(err)),
            "skewness": skewness(err),
        }
    allerr = np.concatenate(list(errors.values()))
    edges = np.histogram_bin_edges(allerr, bins=bins)
    return ErrorHistogram(when, node_ids, errors, edges, diagnostics)
