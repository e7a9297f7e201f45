"""Command-line orchestration: ingest, synth, graph, tune, benchmark,
evaluate, plot.

Exit codes: 0 success, 1 internal error, 2 user/data error.  Each benchmark
run writes a manifest tying every artifact to the config hash, git
revision, seeds, and data fingerprint that produced it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import subprocess
import sys
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from . import graphs as graphs_mod
from . import kernels
from .config import load_config
from .errors import BenchError, ConfigError, DataError
from .metrics import MetricReport, error_histogram, render_tables
from .models import ModelConfig, build
from .panel import (SplitSpec, ingest_csv, load_panel, make_splits, save_panel,
                    select_cohort, synth_panel)
from .training import (TrainConfig, collect_report, prepare_split_data,
                       run_trials, tune)

WEEK_STEPS = 7 * 48

#: relative cache paths (panels, graphs) resolve under this directory
ENV_CACHE_DIR = "STLFBENCH_CACHE_DIR"


def cache_path(p) -> Path:
    p = Path(p)
    base = os.environ.get(ENV_CACHE_DIR)
    if base and not p.is_absolute():
        return Path(base) / p
    return p


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _git_revision():
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True,
                             text=True, timeout=5)
        return out.stdout.strip() or None
    except OSError:
        return None


def _panel_fingerprint(panel) -> str:
    h = hashlib.sha256()
    h.update(panel.values.tobytes())
    h.update("|".join(panel.node_ids).encode())
    h.update(panel.timestamps.tobytes())
    return h.hexdigest()


def _resolve_splits(panel, split_tokens):
    """Map config split tokens to (split_id, SplitSpec) pairs."""
    out = []
    calendar = None
    for token in split_tokens:
        if isinstance(token, tuple) and token[0] == "weeks":
            _, tr, va, te = token
            need = int(round((tr + va + te) * WEEK_STEPS))
            if panel.n_steps < need:
                raise DataError(f"panel too short for weeks split: have "
                                f"{panel.n_steps} steps, need {need}")
            ts = panel.timestamps
            step = np.timedelta64(30, "m")
            a = int(round(tr * WEEK_STEPS))
            b = a + int(round(va * WEEK_STEPS))
            c = b + int(round(te * WEEK_STEPS))
            end = ts[c] if c < panel.n_steps else ts[-1] + step
            out.append((1, SplitSpec(ts[a], (ts[a], ts[b]), (ts[b], end))))
        else:
            if calendar is None:
                calendar = make_splits(panel)
            out.append((token, calendar[token - 1]))
    return out


def _load_data(cfg):
    if "panel" in cfg.data:
        panel = load_panel(cache_path(cfg.data["panel"]))
        planted = None
    else:
        panel, planted = synth_panel(
            cfg.data["synth_nodes"], cfg.data["synth_steps"],
            cfg.data.get("synth_clusters", 1),
            cfg.data.get("synth_coupling", 0.0),
            cfg.data.get("synth_seed", 0))
    if "cohort" in cfg.data:
        ids = [l.strip() for l in Path(cfg.data["cohort"]).read_text().splitlines()
               if l.strip()]
        panel = select_cohort(panel, ids)
    return panel, planted


def build_signal_graph(panel, spec, graph_cfg) -> graphs_mod.Graph:
    """Signal graph from the training period of one split."""
    measure = graph_cfg.get("measure", "correntropy")
    period = (panel.timestamps[0], spec.train_end)
    common = dict(period=period, train_end=spec.train_end)
    if measure == "pearson":
        sim = graphs_mod.pearson_matrix(panel, **common)
    elif measure == "euclidean":
        sim = graphs_mod.euclidean_matrix(
            panel, zscore=graph_cfg.get("zscore", True), **common)
    elif measure == "dtw":
        sim = graphs_mod.dtw_matrix(
            panel, band=graph_cfg.get("band", 48),
            zscore=graph_cfg.get("zscore", True), **common)
    elif measure == "correntropy":
        sim = graphs_mod.correntropy_matrix(
            panel, sigma=graph_cfg.get("sigma"), **common)
    else:
        raise ConfigError(f"unknown graph measure {measure!r}")
    return graphs_mod.sparsify(
        sim, rule=graph_cfg.get("rule", "threshold"),
        tau=graph_cfg.get("tau"), k=graph_cfg.get("k"),
        target_degree=graph_cfg.get("target_degree", 10.0))


# -- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    column_map = {}
    if args.meter_col:
        column_map[args.meter_col] = "meter_id"
    if args.time_col:
        column_map[args.time_col] = "timestamp"
    if args.value_col:
        column_map[args.value_col] = "consumption_kWh"
    res = ingest_csv(args.input, resolution=args.resolution,
                     column_map=column_map or None)
    panel = res.panel
    if args.cohort:
        ids = [l.strip() for l in Path(args.cohort).read_text().splitlines()
               if l.strip()]
        panel = select_cohort(panel, ids)
    for meter in res.dropped_meters:
        print(f"dropped incomplete meter: {meter}")
    if res.row_errors:
        for line, why in res.row_errors:
            print(f"row error at line {line}: {why}", file=sys.stderr)
        print(f"{len(res.row_errors)} corrupt row(s); cache not written",
              file=sys.stderr)
        return 2
    out = save_panel(panel, cache_path(args.out))
    span = f"{panel.timestamps[0]} … {panel.timestamps[-1]}"
    print(f"panel cache: {out}  N={panel.n_nodes} T={panel.n_steps}  [{span}]")
    return 0


def cmd_synth(args) -> int:
    panel, planted = synth_panel(args.nodes, args.steps, args.clusters,
                                 args.coupling, args.seed)
    out = save_panel(panel, cache_path(args.out))
    print(f"synthetic panel: {out}  N={panel.n_nodes} T={panel.n_steps}")
    if args.graph_out:
        graphs_mod.save_graph(planted, cache_path(args.graph_out))
        print(f"planted graph: {args.graph_out}  edges={planted.n_edges}")
    return 0


def cmd_graph(args) -> int:
    panel = load_panel(cache_path(args.panel))
    rule, _, param = args.rule.partition(":")
    graph_cfg = {"measure": args.measure, "rule": rule}
    if rule == "threshold":
        graph_cfg["tau"] = None if param in ("", "auto") else float(param)
    elif rule == "knn":
        graph_cfg["k"] = int(param) if param else 10
    else:
        raise ConfigError(f"unknown sparsify rule {args.rule!r}")
    if args.band is not None:
        graph_cfg["band"] = args.band
    if args.sigma is not None:
        graph_cfg["sigma"] = args.sigma
    if args.train_end:
        spec_end = np.datetime64(args.train_end)
    else:
        warnings.warn("no --train-end given; the whole panel feeds the graph",
                      RuntimeWarning)
        spec_end = panel.timestamps[-1] + np.timedelta64(30, "m")
    spec = SplitSpec(spec_end, (spec_end, spec_end + np.timedelta64(1, "h")),
                     (spec_end + np.timedelta64(1, "h"),
                      spec_end + np.timedelta64(2, "h")))
    graph = build_signal_graph(panel, spec, graph_cfg)
    graphs_mod.save_graph(graph, cache_path(args.out))
    kernel = kernels.load_native()
    print(f"graph: {args.out}  measure={args.measure} rule={args.rule} "
          f"edges={graph.n_edges} mean_degree={graph.mean_degree():.2f} "
          f"kernel={'native ' + kernel.version() if kernel else 'reference'}")
    return 0


def cmd_tune(args) -> int:
    cfg = load_config(args.config)
    if len(cfg.model_ids) != 1:
        raise ConfigError("tune expects exactly one model in [models] ids")
    if not cfg.tuning_grid:
        raise ConfigError("config has no [tuning] grid")
    model_id = cfg.model_ids[0]
    panel, planted = _load_data(cfg)
    split_id, spec = _resolve_splits(panel, cfg.splits)[0]
    base = cfg.model_config(model_id)
    graph = None
    if base.graph_source == "signal":
        graph = planted if cfg.graph.get("planted") and planted is not None \
            else build_signal_graph(panel, spec, cfg.graph)
    best_model_cfg, best_train_cfg, records = tune(
        base, cfg.tuning_grid, panel, spec, cfg.training, graph=graph,
        budget=cfg.tuning_budget, stride=cfg.stride)
    result = {
        "model_id": model_id,
        "best_model_config": {k: v for k, v in vars(best_model_cfg).items()},
        "best_train_config": vars(best_train_cfg),
        "records": records,
    }
    Path(args.out).write_text(json.dumps(result, indent=2, default=str))
    print(f"tuned {model_id}: best val loss "
          f"{min(r['val_loss'] for r in records):.4f} -> {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    overrides = {f.name: getattr(args, f.name)
                 for f in dataclasses.fields(TrainConfig)
                 if getattr(args, f.name, None) is not None}
    if overrides:
        cfg.training = cfg.training.replace(**overrides)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "logs").mkdir(exist_ok=True)
    (out_dir / "forecasts").mkdir(exist_ok=True)
    manifest = {
        "config_path": str(args.config),
        "config_hash": hashlib.sha256(cfg.raw_text.encode()).hexdigest(),
        "git_revision": _git_revision(),
        "seeds": list(range(cfg.training.base_seed,
                            cfg.training.base_seed + cfg.training.n_trials)),
        "timings": {}, "outputs": {},
    }
    t0 = time.perf_counter()
    panel, planted = _load_data(cfg)
    manifest["data_fingerprint"] = _panel_fingerprint(panel)
    manifest["timings"]["load_data"] = time.perf_counter() - t0

    report = MetricReport()
    summaries = {}
    failures = []
    first_forecasts = {}
    try:
        for split_id, spec in _resolve_splits(panel, cfg.splits):
            t_split = time.perf_counter()
            signal_graph = None
            data_cache = {}
            for model_id in cfg.model_ids:
                mc = cfg.model_config(model_id)
                graph = None
                if mc.graph_source == "signal":
                    if signal_graph is None:
                        t_g = time.perf_counter()
                        if cfg.graph.get("planted") and planted is not None:
                            signal_graph = planted
                        else:
                            signal_graph = build_signal_graph(panel, spec,
                                                              cfg.graph)
                        manifest["timings"][f"graph_split{split_id}"] = \
                            time.perf_counter() - t_g
                    graph = signal_graph
                key = (mc.window, mc.horizon)
                if key not in data_cache:
                    data_cache[key] = prepare_split_data(
                        panel, spec, mc.window, mc.horizon, cfg.stride)
                data = data_cache[key]
                t_m = time.perf_counter()
                results, summary = run_trials(mc, graph, data, cfg.training,
                                              log_dir=out_dir / "logs")
                manifest["timings"][f"{model_id}_split{split_id}"] = \
                    time.perf_counter() - t_m
                collect_report(report, model_id, split_id, results)
                summaries[f"{model_id}/split{split_id}"] = summary
                done = next(r for r in results if not r.failed)
                fc_path = out_dir / "forecasts" / f"{model_id}-split{split_id}.npz"
                np.savez_compressed(
                    fc_path, truth_wh=done.truth_wh, pred_wh=done.forecast_wh,
                    timestamps=done.eval_timestamps.astype("datetime64[s]")
                    .astype("int64"))
                manifest["outputs"][str(fc_path)] = _sha256(fc_path)
            manifest["timings"][f"split{split_id}"] = \
                time.perf_counter() - t_split
            if cfg.histogram_at:
                _write_histogram(cfg, out_dir, split_id, manifest)
    finally:
        # partial results are preserved even when a stage fails
        report_path = out_dir / "report.csv"
        report_path.write_text(report.to_csv())
        manifest["outputs"][str(report_path)] = _sha256(report_path)
        tables_path = out_dir / "tables.txt"
        tables_path.write_text(render_tables(report) if report.rows else "")
        manifest["outputs"][str(tables_path)] = _sha256(tables_path)
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(summaries, indent=2))
        manifest["outputs"][str(summary_path)] = _sha256(summary_path)
        manifest["timings"]["total"] = time.perf_counter() - t0
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    print(render_tables(report) if report.rows else "no results")
    print(f"artifacts in {out_dir}")
    return 0


def _write_histogram(cfg, out_dir, split_id, manifest):
    when = np.datetime64(cfg.histogram_at)
    preds, truth, ts, nodes = {}, None, None, None
    for model_id in cfg.model_ids:
        path = out_dir / "forecasts" / f"{model_id}-split{split_id}.npz"
        if not path.exists():
            continue
        with np.load(path) as npz:
            stamps = npz["timestamps"].astype("datetime64[s]")
            if when not in stamps.astype("datetime64[ns]"):
                return
            preds[model_id] = npz["pred_wh"]
            truth = npz["truth_wh"]
            ts = stamps.astype("datetime64[ns]")
    if not preds:
        return
    hist = error_histogram(truth, preds, ts, when, bins=cfg.histogram_bins)
    path = out_dir / f"histogram-split{split_id}.csv"
    path.write_text(hist.to_csv())
    manifest["outputs"][str(path)] = _sha256(path)


def cmd_evaluate(args) -> int:
    report = MetricReport.from_csv(Path(args.report).read_text())
    text = render_tables(report)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "tables.txt").write_text(text)
    print(text)
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if (args.report is None) == (args.histogram is None):
        raise ConfigError("plot needs exactly one of --report / --histogram")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.report:
        report = MetricReport.from_csv(Path(args.report).read_text())
        fig, axes = plt.subplots(1, 2, figsize=(12, 4.5))
        for ax, level in zip(axes, ("residential", "aggregate")):
            models = report.models()
            splits = report.splits()
            width = 0.8 / max(len(splits), 1)
            for j, split in enumerate(splits):
                rows = [report.row(m, split, level, "mae") for m in models]
                xs = np.arange(len(models)) + j * width
                means = [r.mean if r else np.nan for r in rows]
                stds = [r.std if r else 0.0 for r in rows]
                ax.bar(xs, means, width=width, yerr=stds, capsize=2,
                       label=f"split {split}")
            ax.set_xticks(np.arange(len(models)) + 0.4 - width / 2)
            ax.set_xticklabels(models, rotation=45, ha="right")
            unit = "Wh" if level == "residential" else "kWh"
            ax.set_ylabel(f"MAE ({unit})")
            ax.set_title(f"{level} level")
            ax.legend()
        fig.tight_layout()
        fig.savefig(out, dpi=150)
    else:
        text = Path(args.histogram).read_text().strip().splitlines()[1:]
        by_model = {}
        for line in text:
            model_id, _, err = line.split(",")
            by_model.setdefault(model_id, []).append(float(err))
        fig, axes = plt.subplots(len(by_model), 1, sharex=True,
                                 figsize=(8, 2.2 * len(by_model)))
        axes = np.atleast_1d(axes)
        edges = np.histogram_bin_edges(
            np.concatenate([np.asarray(v) for v in by_model.values()]), bins=20)
        for ax, (model_id, errs) in zip(axes, sorted(by_model.items())):
            ax.hist(errs, bins=edges, alpha=0.8)
            ax.set_ylabel(model_id)
        axes[-1].set_xlabel("forecast - truth (Wh)")
        fig.tight_layout()
        fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


# -- entry point ---------------------------------------------------------------


def make_parser():
    p = argparse.ArgumentParser(
        prog="stlfbench",
        description="Benchmark graph-based short-term load forecasters "
                    "on smart-meter panels.",
        epilog=f"Relative cache paths resolve under ${ENV_CACHE_DIR} when set.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="read a meter CSV into a panel cache")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--cohort", help="file with one meter id per line")
    s.add_argument("--resolution", default="30min")
    s.add_argument("--meter-col"), s.add_argument("--time-col")
    s.add_argument("--value-col")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic panel")
    s.add_argument("--nodes", type=int, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--clusters", type=int, default=1)
    s.add_argument("--coupling", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--graph-out")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("graph", help="build a signal graph from a panel cache")
    s.add_argument("--panel", required=True)
    s.add_argument("--measure", required=True,
                   choices=["pearson", "euclidean", "dtw", "correntropy"])
    s.add_argument("--rule", default="threshold:auto",
                   help="threshold:<tau|auto> or knn:<k>")
    s.add_argument("--band", type=int)
    s.add_argument("--sigma", type=float)
    s.add_argument("--train-end", help="ISO timestamp bounding the data used")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_graph)

    s = sub.add_parser("tune", help="grid-search hyperparameters on validation")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_tune)

    s = sub.add_parser("benchmark", help="run the full benchmark from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    # every training-engine field is also a flag, overriding the config
    s.add_argument("--learning-rate", type=float, dest="learning_rate")
    s.add_argument("--batch-size", type=int, dest="batch_size")
    s.add_argument("--max-epochs", type=int, dest="max_epochs")
    s.add_argument("--patience", type=int)
    s.add_argument("--n-trials", type=int, dest="n_trials")
    s.add_argument("--base-seed", type=int, dest="base_seed")
    s.add_argument("--grad-clip", type=float, dest="grad_clip")
    s.add_argument("--steps-per-epoch", type=int, dest="steps_per_epoch")
    s.set_defaults(fn=cmd_benchmark)

    s = sub.add_parser("evaluate", help="render tables from a report CSV")
    s.add_argument("--report", required=True)
    s.add_argument("--out-dir")
    s.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("plot", help="plot a report or an error histogram")
    s.add_argument("--report")
    s.add_argument("--histogram")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_plot)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (BenchError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
