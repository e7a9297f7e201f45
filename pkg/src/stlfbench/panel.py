"""Smart-meter panel handling: ingestion, splits, windowing, scaling.

A :class:`LoadPanel` is an N x T matrix of half-hourly consumption in Wh
with node identifiers and a strictly uniform timestamp grid.  All functions
here are pure; panels are treated as immutable.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError

STEP = np.timedelta64(30, "m")
#: steps per day at 30-minute resolution; the day-ahead horizon
DAY_STEPS = 48

_SCALER_EPS = 1e-8


@dataclasses.dataclass(frozen=True)
class LoadPanel:
    """Consumption matrix (Wh per 30-min interval) over a uniform time grid.

    Parameters
    ----------
    values : ndarray, shape (N, T)
        Non-negative energy per interval, Wh.
    node_ids : tuple of str
        Meter identifiers, one per row.
    timestamps : ndarray of datetime64[ns], shape (T,)
        Strictly increasing, exact 30-minute spacing.
    """

    values: np.ndarray
    node_ids: tuple
    timestamps: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype="datetime64[ns]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_ids", tuple(str(i) for i in self.node_ids))
        object.__setattr__(self, "timestamps", ts)
        if values.ndim != 2:
            raise DataError(f"panel values must be 2-D, got shape {values.shape}")
        n, t = values.shape
        if n < 2:
            raise DataError("panel needs at least 2 nodes (graph methods undefined otherwise)")
        if len(self.node_ids) != n or len(set(self.node_ids)) != n:
            raise DataError("node_ids must be unique and match the row count")
        if ts.shape != (t,):
            raise DataError("timestamps length must match the column count")
        if t >= 2:
            deltas = np.diff(ts)
            if not np.all(deltas == STEP):
                bad = int(np.argmax(deltas != STEP))
                raise DataError(
                    f"timestamps must be uniform at 30 minutes; first violation "
                    f"after {ts[bad]}")
        if np.isnan(values).any():
            raise DataError("panel contains NaN entries")
        if (values < 0).any():
            raise DataError("panel contains negative consumption")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def index_of(self, when) -> int:
        when = np.datetime64(pd.Timestamp(when))
        idx = int(np.searchsorted(self.timestamps, when))
        if idx >= self.n_steps or self.timestamps[idx] != when:
            raise DataError(f"timestamp {when} not on the panel grid")
        return idx

    def slice_period(self, start, end) -> "LoadPanel":
        """Sub-panel with timestamps in [start, end)."""
        start = np.datetime64(pd.Timestamp(start))
        end = np.datetime64(pd.Timestamp(end))
        mask = (self.timestamps >= start) & (self.timestamps < end)
        if not mask.any():
            raise DataError(f"period [{start}, {end}) not covered by panel")
        return LoadPanel(self.values[:, mask], self.node_ids, self.timestamps[mask])


@dataclasses.dataclass(frozen=True)
class SplitSpec:
    """Train / validation / test boundaries; all ends are exclusive."""

    train_end: np.datetime64
    val_period: tuple
    test_period: tuple

    def __post_init__(self):
        te = np.datetime64(pd.Timestamp(self.train_end))
        vp = tuple(np.datetime64(pd.Timestamp(x)) for x in self.val_period)
        tp = tuple(np.datetime64(pd.Timestamp(x)) for x in self.test_period)
        object.__setattr__(self, "train_end", te)
        object.__setattr__(self, "val_period", vp)
        object.__setattr__(self, "test_period", tp)
        if not (te <= vp[0] < vp[1] <= tp[0] < tp[1]):
            raise DataError("split periods must be ordered and non-overlapping")


@dataclasses.dataclass(frozen=True)
class WindowBatch:
    """Paired (input, target) windows; target starts one step after input ends."""

    inputs: np.ndarray   # (B, N, W)
    targets: np.ndarray  # (B, N, H)
    origins: np.ndarray  # (B,) datetime64 of each first target step

    def __len__(self):
        return self.inputs.shape[0]


@dataclasses.dataclass(frozen=True)
class IngestResult:
    panel: LoadPanel
    dropped_meters: tuple
    row_errors: tuple  # (line_number, message)


def ingest_csv(path, resolution="30min", span=None, column_map=None) -> IngestResult:
    """Read a long-format meter CSV into a :class:`LoadPanel`.

    Expects a header row and columns ``meter_id``, ``timestamp`` (ISO-8601),
    ``consumption_kWh``; ``column_map`` renames source columns to those
    names.  Values are converted to Wh.  Duplicate (meter, timestamp) rows
    resolve last-wins.  Meters missing any interval of the requested span
    are dropped and reported.

    Returns
    -------
    IngestResult
        Panel plus dropped meters and row-level errors (line numbers are
        1-based file lines including the header).
    """
    step = pd.Timedelta(resolution)
    if step != pd.Timedelta("30min"):
        raise DataError(f"unsupported resolution {resolution!r}; panels are half-hourly")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if column_map:
        df = df.rename(columns=dict(column_map))
    required = ["meter_id", "timestamp", "consumption_kWh"]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"missing required columns: {missing}")

    lines = df.index.to_numpy() + 2  # header is line 1
    ts = pd.to_datetime(df["timestamp"], errors="coerce", format="ISO8601")
    kwh = pd.to_numeric(df["consumption_kWh"], errors="coerce")

    row_errors = []
    bad = ts.isna() | kwh.isna() | (kwh < 0)
    for i in np.flatnonzero(bad.to_numpy()):
        reason = ("unparseable timestamp" if pd.isna(ts.iloc[i])
                  else "unparseable consumption" if pd.isna(kwh.iloc[i])
                  else "negative consumption")
        row_errors.append((int(lines[i]), reason))
    good = df.loc[~bad, ["meter_id"]].assign(ts=ts[~bad], wh=kwh[~bad] * 1000.0)

    if span is not None:
        start, end = (pd.Timestamp(span[0]), pd.Timestamp(span[1]))
    elif len(good):
        start, end = good["ts"].min(), good["ts"].max() + step
    else:
        raise DataError("no complete meters (no parseable rows)")
    grid = pd.date_range(start, end, freq=step, inclusive="left")

    wide = (good.drop_duplicates(subset=["meter_id", "ts"], keep="last")
                .pivot(index="ts", columns="meter_id", values="wh")
                .reindex(grid))
    complete = wide.columns[wide.notna().all(axis=0)]
    dropped = tuple(sorted(set(wide.columns) - set(complete)))
    if len(complete) < 2:
        raise DataError("no complete meters after completeness filtering")
    wide = wide[complete]
    panel = LoadPanel(wide.to_numpy().T, tuple(complete), grid.to_numpy())
    return IngestResult(panel, dropped, tuple(row_errors))


def select_cohort(panel: LoadPanel, ids) -> LoadPanel:
    """Row-subset of the panel, preserving the order of ``ids``."""
    ids = [str(i) for i in ids]
    lookup = {m: i for i, m in enumerate(panel.node_ids)}
    unknown = [m for m in ids if m not in lookup]
    if unknown:
        raise DataError(f"unknown meter id {unknown[0]!r}")
    rows = [lookup[m] for m in ids]
    return LoadPanel(panel.values[rows], tuple(ids), panel.timestamps)


def make_splits(panel: LoadPanel):
    """The three chronological splits of the benchmark year.

    Training always starts at the panel's January 1 and runs to the day
    before July 1 / September 1 / November 1; validation is the month right
    after training and testing the month after that.
    """
    year = pd.Timestamp(panel.timestamps[0]).year
    jan1 = pd.Timestamp(year=year, month=1, day=1)
    next_jan = pd.Timestamp(year=year + 1, month=1, day=1)
    have_start, have_end = (pd.Timestamp(panel.timestamps[0]),
                            pd.Timestamp(panel.timestamps[-1]) + pd.Timedelta(STEP))
    if have_start > jan1 or have_end < next_jan:
        raise DataError(
            f"panel must cover [{jan1.date()}, {next_jan.date()}); "
            f"missing range outside [{have_start}, {have_end})")
    splits = []
    for month in (7, 9, 11):
        train_end = pd.Timestamp(year=year, month=month, day=1)
        val_end = train_end + pd.offsets.MonthBegin(1)
        test_end = train_end + pd.offsets.MonthBegin(2)
        splits.append(SplitSpec(train_end.to_datetime64(),
                                (train_end.to_datetime64(), val_end.to_datetime64()),
                                (val_end.to_datetime64(), test_end.to_datetime64())))
    return splits


def _partition_bounds(panel: LoadPanel, spec: SplitSpec):
    ts = panel.timestamps
    def rng(start, end):
        lo = int(np.searchsorted(ts, start, side="left"))
        hi = int(np.searchsorted(ts, end, side="left"))
        return lo, hi
    return {
        "train": rng(ts[0], spec.train_end),
        "val": rng(*spec.val_period),
        "test": rng(*spec.test_period),
    }


def window(panel: LoadPanel, spec: SplitSpec, w: int, h: int, stride: int = 1,
           eval_stride: int | None = None):
    """Sliding (input, target) windows for each partition.

    ``stride`` applies to the training partition; validation and test use
    ``eval_stride`` (defaults to ``h``, i.e. non-overlapping day-ahead
    blocks so each evaluated timestamp is forecast exactly once).

    Windows never cross a partition boundary, and each partition yields
    ``floor((len - w - h) / stride) + 1`` windows.
    """
    if w < 1 or h < 1 or stride < 1:
        raise DataError("w, h and stride must all be >= 1")
    if eval_stride is None:
        eval_stride = h
    bounds = _partition_bounds(panel, spec)
    out = {}
    for name, (lo, hi) in bounds.items():
        s = stride if name == "train" else eval_stride
        length = hi - lo
        n_win = (length - w - h) // s + 1 if length >= w + h else 0
        if n_win < 1:
            raise DataError(
                f"{name} partition too short for one window "
                f"(length {length}, need {w + h})")
        offsets = lo + np.arange(n_win) * s
        inputs = np.stack([panel.values[:, o:o + w] for o in offsets])
        targets = np.stack([panel.values[:, o + w:o + w + h] for o in offsets])
        origins = panel.timestamps[offsets + w]
        out[name] = WindowBatch(inputs, targets, origins)
    return out["train"], out["val"], out["test"]


@dataclasses.dataclass(frozen=True)
class Scaler:
    """Per-node standardization fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray

    def _moments_for(self, x):
        x = np.asarray(x, dtype=np.float64)
        node_axis = {2: 0, 3: 1}.get(x.ndim)
        if node_axis is None:
            raise DataError(f"cannot scale array of ndim {x.ndim}")
        if x.shape[node_axis] != len(self.mean):
            raise DataError(f"array has {x.shape[node_axis]} nodes, scaler "
                            f"was fitted on {len(self.mean)}")
        if x.ndim == 2:       # (N, T)
            return self.mean[:, None], self.std[:, None]
        return self.mean[None, :, None], self.std[None, :, None]  # (B, N, L)

    def transform(self, x):
        m, s = self._moments_for(x)
        return (np.asarray(x, dtype=np.float64) - m) / s

    def inverse(self, x):
        m, s = self._moments_for(x)
        return np.asarray(x, dtype=np.float64) * s + m

    def transform_batch(self, batch: WindowBatch) -> WindowBatch:
        return WindowBatch(self.transform(batch.inputs),
                           self.transform(batch.targets), batch.origins)


def fit_scaler(panel: LoadPanel, spec: SplitSpec) -> Scaler:
    lo, hi = _partition_bounds(panel, spec)["train"]
    if hi <= lo:
        raise DataError("training partition is empty; cannot fit scaler")
    train = panel.values[:, lo:hi]
    mean = train.mean(axis=1)
    std = train.std(axis=1)
    flat = std < _SCALER_EPS
    if flat.any():
        warnings.warn(
            f"{int(flat.sum())} node(s) have (near-)zero training variance; "
            f"flooring std at {_SCALER_EPS}", RuntimeWarning)
        std = np.maximum(std, _SCALER_EPS)
    return Scaler(mean, std)


def synth_panel(n_nodes: int, n_steps: int, k_clusters: int, coupling: float,
                seed: int):
    """Synthetic half-hourly panel with a planted cluster graph.

    Each cluster shares a seasonal deviation and a slow common noise
    component, both scaled by ``coupling``; on top every node has its own
    AR(1) noise.  The returned graph connects all same-cluster pairs with
    weight ``coupling`` (so ``coupling=0`` plants an edgeless graph).
    """
    from .graphs import Graph, graph_from_dense  # local import avoids a cycle

    if not 0.0 <= coupling <= 1.0:
        raise DataError(f"coupling must lie in [0, 1], got {coupling}")
    if not n_nodes >= k_clusters >= 1:
        raise DataError("need n_nodes >= k_clusters >= 1")
    rng = np.random.default_rng(seed)
    ts = (np.datetime64("2013-01-01T00:00") +
          STEP * np.arange(n_steps)).astype("datetime64[ns]")
    tod = np.arange(n_steps) % DAY_STEPS / DAY_STEPS
    dow = (np.arange(n_steps) // DAY_STEPS) % 7

    # global daily shape: morning and evening peaks, never below 0.35
    daily = (1.0
             + 0.45 * np.cos(2 * np.pi * (tod - 0.79))
             + 0.20 * np.cos(4 * np.pi * (tod - 0.35)))
    weekly = np.where(dow >= 5, 1.12, 1.0)

    clusters = np.repeat(np.arange(k_clusters), -(-n_nodes // k_clusters))[:n_nodes]
    levels = rng.uniform(250.0, 550.0, size=n_nodes)

    def ar1(phi, sigma, size):
        eps = rng.standard_normal(size) * sigma * np.sqrt(1 - phi ** 2)
        out = np.empty(size)
        out[..., 0] = eps[..., 0] / np.sqrt(1 - phi ** 2)
        for t in range(1, size[-1]):
            out[..., t] = phi * out[..., t - 1] + eps[..., t]
        return out

    # per-cluster deterministic seasonal deviation, active only when coupled
    phase = rng.uniform(0, 1, size=k_clusters)
    depth = rng.uniform(0.15, 0.35, size=k_clusters)
    cluster_season = depth[:, None] * np.cos(2 * np.pi * (tod[None, :] - phase[:, None]))
    # cluster noise persists across the day-ahead horizon (predictable when
    # denoised); node noise decorrelates much faster
    cluster_noise = ar1(0.99, 0.28, (k_clusters, n_steps))
    node_noise = ar1(0.85, 0.18, (n_nodes, n_steps))

    shape = daily * weekly
    base = shape[None, :] * (1.0 + coupling * cluster_season[clusters])
    factor = 1.0 + coupling * cluster_noise[clusters] + node_noise
    values = levels[:, None] * base * np.clip(factor, 0.1, None)
    values = np.maximum(values, 1.0)

    node_ids = tuple(f"synth{i:03d}" for i in range(n_nodes))
    panel = LoadPanel(values, node_ids, ts)

    adjacency = np.zeros((n_nodes, n_nodes))
    if coupling > 0.0:
        same = clusters[:, None] == clusters[None, :]
        adjacency[same] = coupling
        np.fill_diagonal(adjacency, 0.0)
    return panel, graph_from_dense(adjacency, kind="signal")


# -- cache -------------------------------------------------------------------

PANEL_FORMAT = "stlfbench-panel-v1"


def save_panel(panel: LoadPanel, path) -> Path:
    """Write the panel as ``<path>.npz`` plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    if path.suffix == ".npz":
        path = path.with_suffix("")
    np.savez_compressed(path.with_suffix(".npz"), values=panel.values)
    sidecar = {
        "format": PANEL_FORMAT,
        "units": "Wh",
        "node_ids": list(panel.node_ids),
        "timestamps": [str(t) for t in panel.timestamps.astype("datetime64[s]")],
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar))
    return path.with_suffix(".npz")


def load_panel(path) -> LoadPanel:
    path = Path(path)
    if path.suffix == ".npz":
        path = path.with_suffix("")
    sidecar = json.loads(path.with_suffix(".json").read_text())
    if sidecar.get("format") != PANEL_FORMAT:
        raise DataError(f"not a panel cache: {path.with_suffix('.json')}")
    with np.load(path.with_suffix(".npz")) as npz:
        values = npz["values"]
    ts = np.array(sidecar["timestamps"], dtype="datetime64[ns]")
    return LoadPanel(values, tuple(sidecar["node_ids"]), ts)
