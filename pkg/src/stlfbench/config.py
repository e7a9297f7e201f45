"""Benchmark run configuration: INI-style sections of key = value pairs.

Sections: ``[data]``, ``[graph]``, ``[models]``, per-model overrides
``[model:<id>]``, ``[training]``, ``[evaluation]``, ``[tuning]``.  Unknown
sections or keys are hard errors, so typos cannot silently change a run.
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from .errors import ConfigError
from .models import MODEL_IDS, ModelConfig
from .training import TrainConfig

_MODEL_FIELDS = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}

_DATA_KEYS = {"panel", "cohort", "synth_nodes", "synth_steps", "synth_clusters",
              "synth_coupling", "synth_seed"}
_GRAPH_KEYS = {"measure", "rule", "tau", "k", "target_degree", "band", "sigma",
               "zscore", "planted"}
_MODELS_KEYS = {"ids"}
_TRAINING_EXTRA = {"stride"}
_EVAL_KEYS = {"splits", "histogram_at", "histogram_bins"}
_TUNING_KEYS = {"budget"}


def _parse_scalar(text, target_type):
    text = text.strip()
    if target_type is bool or target_type == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if target_type is int or target_type == "int":
        return int(text)
    if target_type is float or target_type == "float":
        return float(text)
    return text


def _parse_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


@dataclasses.dataclass
class RunConfig:
    data: dict
    graph: dict
    model_ids: list
    model_overrides: dict      # model_id -> dict of ModelConfig fields
    training: TrainConfig
    stride: int
    splits: list               # e.g. [1, 2, 3] or [("weeks", 5.0, 1.5, 1.5)]
    histogram_at: str | None
    histogram_bins: int
    tuning_budget: int | None
    raw_text: str

    def model_config(self, model_id) -> ModelConfig:
        kw = dict(self.model_overrides.get("*", {}))
        kw.update(self.model_overrides.get(model_id, {}))
        return ModelConfig(model_id, **kw)


def _coerce_model_field(key, value):
    if key not in _MODEL_FIELDS or key == "model_id":
        raise ConfigError(f"unknown model option {key!r}")
    if key == "dilations":
        return tuple(int(v) for v in _parse_list(value))
    annotation = _MODEL_FIELDS[key]
    for typ in (int, float):
        if typ.__name__ in str(annotation):
            return _parse_scalar(value, typ)
    if "bool" in str(annotation):
        return _parse_scalar(value, bool)
    return value.strip()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    known = {"data", "graph", "models", "training", "evaluation", "tuning"}
    for section in parser.sections():
        if section in known or section.startswith("model:"):
            continue
        raise ConfigError(f"unknown config section [{section}]")

    def section(name, allowed):
        if not parser.has_section(name):
            return {}
        items = dict(parser.items(name))
        unknown = set(items) - allowed
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        return items

    data_raw = section("data", _DATA_KEYS)
    data = {}
    for key, value in data_raw.items():
        if key in ("synth_nodes", "synth_steps", "synth_clusters", "synth_seed"):
            data[key] = _parse_scalar(value, int)
        elif key == "synth_coupling":
            data[key] = _parse_scalar(value, float)
        else:
            data[key] = value.strip()
    if "panel" not in data and "synth_nodes" not in data:
        raise ConfigError("[data] needs either panel= or synth_* settings")

    graph_raw = section("graph", _GRAPH_KEYS)
    graph = {}
    for key, value in graph_raw.items():
        if key in ("k", "band"):
            graph[key] = _parse_scalar(value, int)
        elif key in ("target_degree", "sigma"):
            graph[key] = _parse_scalar(value, float)
        elif key in ("zscore", "planted"):
            graph[key] = _parse_scalar(value, bool)
        elif key == "tau":
            graph[key] = None if value.strip() == "auto" else float(value)
        else:
            graph[key] = value.strip()

    models_raw = section("models", _MODELS_KEYS)
    if "ids" not in models_raw:
        raise ConfigError("[models] must list ids = model1, model2, …")
    model_ids = _parse_list(models_raw["ids"])
    for mid in model_ids:
        if mid not in MODEL_IDS:
            raise ConfigError(f"unknown model id {mid!r} in [models]")

    overrides = {}
    for sec in parser.sections():
        if not sec.startswith("model:"):
            continue
        target = sec.split(":", 1)[1]
        if target != "*" and target not in MODEL_IDS:
            raise ConfigError(f"unknown model id in section [{sec}]")
        overrides[target] = {k: _coerce_model_field(k, v)
                             for k, v in parser.items(sec)}

    training_raw = section("training", set(_TRAIN_FIELDS) | _TRAINING_EXTRA)
    stride = int(training_raw.pop("stride", 1))
    kw = {}
    for key, value in training_raw.items():
        ann = str(_TRAIN_FIELDS[key])
        if value.strip().lower() == "none":
            kw[key] = None
        elif "int" in ann:
            kw[key] = _parse_scalar(value, int)
        else:
            kw[key] = _parse_scalar(value, float)
    training = TrainConfig(**kw)

    eval_raw = section("evaluation", _EVAL_KEYS)
    splits = _parse_splits(eval_raw.get("splits", "1"))
    histogram_at = eval_raw.get("histogram_at")
    histogram_bins = int(eval_raw.get("histogram_bins", 20))

    tuning_raw = section("tuning", _TUNING_KEYS | set(_MODEL_FIELDS)
                         | set(_TRAIN_FIELDS))
    budget = None
    if "budget" in tuning_raw:
        budget = _parse_scalar(tuning_raw.pop("budget"), int)
    # remaining tuning keys are grids; stored under graph? no: returned via budget
    tuning_grid = {k: [_parse_scalar(v, float) if _looks_numeric(v) else v.strip()
                       for v in _parse_list(vs)]
                   for k, vs in tuning_raw.items()}

    cfg = RunConfig(data=data, graph=graph, model_ids=model_ids,
                    model_overrides=overrides, training=training,
                    stride=stride, splits=splits, histogram_at=histogram_at,
                    histogram_bins=histogram_bins, tuning_budget=budget,
                    raw_text=text)
    cfg.tuning_grid = _normalize_grid(tuning_grid)
    return cfg


def _looks_numeric(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _normalize_grid(grid):
    out = {}
    for key, values in grid.items():
        if key in _TRAIN_FIELDS or key in _MODEL_FIELDS:
            ann = str(_TRAIN_FIELDS.get(key) or _MODEL_FIELDS.get(key))
            if "int" in ann:
                values = [int(v) for v in values]
        out[key] = values
    return out


def _parse_splits(text):
    text = text.strip()
    if text.startswith("weeks:"):
        parts = [float(p) for p in text[len("weeks:"):].split(",")]
        if len(parts) != 3:
            raise ConfigError("weeks: split needs train,val,test week counts")
        return [("weeks", *parts)]
    splits = []
    for token in _parse_list(text):
        if token not in ("1", "2", "3"):
            raise ConfigError(f"splits must be calendar ids 1,2,3 or weeks:…, "
                              f"got {token!r}")
        splits.append(int(token))
    return splits
