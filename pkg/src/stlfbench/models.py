"""The model zoo: seven graph forecasters and four temporal-only baselines.

Every model satisfies the same contract: ``forecast(X)`` maps a scaled
input block (B, N, W) to forecasts (B, N, H).  Architecture families:

* time-then-space: a temporal encoder per node, then spatial propagation
  (``grugcn``, ``graphwavenet``, ``fcgnn``, ``bpgnn``);
* time-and-space: spatial propagation inside every recurrent step
  (``gcgru``, ``tgcn``, ``agcrn``);
* temporal-only baselines: ``seasonal_naive``, ``var``, ``gru``,
  ``transformer``.

``forecast`` runs on the exact numeric path, so jointly permuting
households, the graph, and any node embeddings permutes outputs
bit-identically.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import warnings
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import blocks
from .autodiff import Tensor
from .errors import ConfigError, DataError, ShapeError, TrainingError
from .graphs import Graph, bipartite_graph, full_graph, normalize

MODEL_IDS = ("seasonal_naive", "var", "gru", "transformer", "grugcn", "gcgru",
             "tgcn", "agcrn", "graphwavenet", "fcgnn", "bpgnn")

#: graph source each architecture requires (the framework's summary table)
REQUIRED_GRAPH_SOURCE = {
    "seasonal_naive": "none", "var": "none", "gru": "none", "transformer": "none",
    "grugcn": "signal", "gcgru": "signal", "tgcn": "signal",
    "agcrn": "learnable", "graphwavenet": "learnable",
    "fcgnn": "full", "bpgnn": "bipartite",
}

ARCHITECTURE_CLASS = {
    "seasonal_naive": "naive", "var": "statistical",
    "gru": "temporal_only", "transformer": "temporal_only",
    "grugcn": "TTS", "graphwavenet": "TTS", "fcgnn": "TTS", "bpgnn": "TTS",
    "gcgru": "TAS", "tgcn": "TAS", "agcrn": "TAS",
}

BENCHMARK_MODELS = ("seasonal_naive", "var", "gru", "transformer")
STGNN_MODELS = ("grugcn", "gcgru", "tgcn", "agcrn", "graphwavenet",
                "fcgnn", "bpgnn")


@dataclasses.dataclass
class ModelConfig:
    """Architecture id plus every tunable knob, with recorded defaults."""

    model_id: str
    graph_source: str | None = None
    window: int = 336
    horizon: int = 48
    hidden_size: int = 32
    gcn_layers: int = 1
    d_embed: int = 8
    k_virtual: int = 4
    rounds: int = 1
    heads: int = 2
    d_ff: int = 64
    encoder_layers: int = 1
    channels: int = 16
    kernel_size: int = 2
    dilations: tuple = (1, 2, 4, 8)
    dropout: float = 0.0
    season_length: int = 48
    var_order: int = 2
    var_diagonal: bool = False

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise ConfigError(f"unknown model_id {self.model_id!r}; "
                              f"known: {', '.join(MODEL_IDS)}")
        required = REQUIRED_GRAPH_SOURCE[self.model_id]
        if self.graph_source is None:
            self.graph_source = required
        if self.graph_source != required:
            raise ConfigError(
                f"{self.model_id} requires graph_source={required!r} per the "
                f"framework summary table, got {self.graph_source!r}")
        if self.window < 1 or self.horizon < 1:
            raise ConfigError("window and horizon must be >= 1")
        if self.model_id == "var" and self.var_order < 1:
            raise ConfigError("var_order must be >= 1")
        self.dilations = tuple(self.dilations)

    def hash(self) -> str:
        payload = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


class ForecastModel:
    """Uniform forecasting interface over scaled inputs."""

    trainable = False

    def __init__(self, config: ModelConfig):
        self.config = config

    @property
    def architecture_class(self) -> str:
        return ARCHITECTURE_CLASS[self.config.model_id]

    def params(self, prefix="") -> dict:
        return {}

    def state_dict(self) -> dict:
        return {}

    def load_state_dict(self, state):
        if state:
            raise ShapeError(f"{self.config.model_id} holds no parameters")

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ShapeError(f"forecast input must be (B, N, W), got {x.shape}")
        if np.isnan(x).any():
            raise DataError("forecast input contains NaN")
        return x

    def forecast(self, x) -> np.ndarray:
        raise NotImplementedError


class NeuralModel(blocks.Block, ForecastModel):
    # Block first so its parameter bookkeeping wins over the stateless stubs
    trainable = True

    def __init__(self, config, n_nodes, seed=0):
        ForecastModel.__init__(self, config)
        blocks.Block.__init__(self)
        self.n_nodes = n_nodes
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def forward(self, x: Tensor, train=False, rng=None) -> Tensor:
        raise NotImplementedError

    def forecast(self, x) -> np.ndarray:
        x = self._check_input(x)
        if x.shape[2] != self.config.window:
            raise ShapeError(f"model expects window {self.config.window}, "
                             f"got {x.shape[2]}")
        with ad.no_grad(), ad.exact_mode():
            out = self.forward(Tensor(x), train=False)
        return out.value


# -- baselines ---------------------------------------------------------------


class SeasonalNaiveModel(ForecastModel):
    """Forecast step t+k with the value observed one season earlier."""

    def forecast(self, x) -> np.ndarray:
        x = self._check_input(x)
        s = self.config.season_length
        w, h = x.shape[2], self.config.horizon
        if w < s:
            raise ShapeError(f"seasonal naive needs window >= {s}, got {w}")
        idx = w - s + (np.arange(h) % s)
        return x[:, :, idx]


class VARModel(ForecastModel):
    """Vector autoregression; least-squares fit, recursive multi-step
    forecasts.  ``var_diagonal`` restricts coefficient matrices to their
    diagonals, reducing the model to independent per-node autoregressions.
    """

    def __init__(self, config):
        super().__init__(config)
        self.intercept = None
        self.coefficients = None  # (p, N, N)

    @property
    def is_fitted(self):
        return self.coefficients is not None

    def fit_series(self, series) -> "VARModel":
        """Estimate on an (N, T) training block (columns in time order)."""
        series = np.asarray(series, dtype=np.float64)
        n, t = series.shape
        p = self.config.var_order
        rows = t - p
        if rows < 10 * (n * p + 1):
            raise TrainingError(
                f"need at least {10 * (n * p + 1) + p} training steps to "
                f"identify VAR({p}) on {n} nodes, got {t}")
        y = series[:, p:].T  # (rows, N)
        lags = [series[:, p - l:t - l].T for l in range(1, p + 1)]
        z = np.concatenate([np.ones((rows, 1))] + lags, axis=1)
        if self.config.var_diagonal:
            self.intercept = np.zeros(n)
            self.coefficients = np.zeros((p, n, n))
            for i in range(n):
                zi = np.concatenate(
                    [np.ones((rows, 1))] +
                    [series[i, p - l:t - l][:, None] for l in range(1, p + 1)],
                    axis=1)
                beta = _lstsq_with_ridge(zi, y[:, i])
                self.intercept[i] = beta[0]
                for l in range(p):
                    self.coefficients[l, i, i] = beta[1 + l]
            return self
        beta = _lstsq_with_ridge(z, y)  # (1 + N*p, N)
        self.intercept = beta[0]
        self.coefficients = np.stack(
            [beta[1 + l * n:1 + (l + 1) * n].T for l in range(p)])
        return self

    def forecast(self, x) -> np.ndarray:
        if not self.is_fitted:
            raise TrainingError("VAR model is not fitted")
        x = self._check_input(x)
        p = self.config.var_order
        if x.shape[2] < p:
            raise ShapeError(f"VAR({p}) needs at least {p} input steps")
        state = [x[:, :, -l] for l in range(1, p + 1)]  # newest first
        preds = []
        for _ in range(self.config.horizon):
            nxt = self.intercept[None, :] + sum(
                state[l] @ self.coefficients[l].T for l in range(p))
            preds.append(nxt)
            state = [nxt] + state[:-1]
        return np.stack(preds, axis=2)

    def state_dict(self):
        if not self.is_fitted:
            return {}
        return {"intercept": self.intercept.copy(),
                "coefficients": self.coefficients.copy()}

    def load_state_dict(self, state):
        self.intercept = np.asarray(state["intercept"], dtype=np.float64)
        self.coefficients = np.asarray(state["coefficients"], dtype=np.float64)


def _lstsq_with_ridge(z, y, lam=1e-6):
    beta, _, rank, _ = np.linalg.lstsq(z, y, rcond=None)
    if rank < z.shape[1]:
        warnings.warn("singular VAR design matrix; falling back to ridge "
                      f"(lambda={lam})", RuntimeWarning)
        gram = z.T @ z + lam * np.eye(z.shape[1])
        beta = np.linalg.solve(gram, z.T @ y)
    return beta


def fit_var(panel, spec, order, diagonal=False) -> VARModel:
    """Fit a VAR baseline on the training partition of a panel."""
    cfg = ModelConfig("var", var_order=order, var_diagonal=diagonal,
                      window=max(order, 1))
    train = panel.slice_period(panel.timestamps[0], spec.train_end)
    return VARModel(cfg).fit_series(train.values)


class GRUModel(NeuralModel):
    """Per-node gated recurrence with shared weights; no cross-node mixing."""

    def __init__(self, config, n_nodes, seed=0):
        super().__init__(config, n_nodes, seed)
        self.cell = self.child("cell", blocks.RecurrentCell(
            self._rng, 1, config.hidden_size))
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, config.hidden_size, config.horizon))

    def forward(self, x, train=False, rng=None):
        seq = ad.transpose(ad.reshape(x, x.shape + (1,)), (0, 2, 1, 3))
        h = self.cell.run(seq)
        if train and self.config.dropout > 0:
            h = ad.dropout(h, self.config.dropout, rng)
        return self.decoder(h)


class TransformerModel(NeuralModel):
    """Channel-independent encoder over the input window.

    Self-attention runs along time within each node's window (no cross-node
    mixing); the encoded window is mean-pooled and decoded to H steps.
    """

    def __init__(self, config, n_nodes, seed=0):
        super().__init__(config, n_nodes, seed)
        d = config.hidden_size
        self.embed = self.child("embed", blocks.Linear(self._rng, 1, d))
        self.pos = blocks.positional_encoding(config.window, d)
        self.layers = [self.child(f"enc{i}", blocks.SelfAttentionEncoderLayer(
            self._rng, d, config.heads, config.d_ff))
            for i in range(config.encoder_layers)]
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, d, config.horizon))

    def forward(self, x, train=False, rng=None):
        b, n, w = x.shape
        tokens = self.embed(ad.reshape(x, (b * n, w, 1))) + self.pos
        for layer in self.layers:
            tokens = layer(tokens)
            if train and self.config.dropout > 0:
                tokens = ad.dropout(tokens, self.config.dropout, rng)
        pooled = ad.tmean(tokens, axis=1)
        return self.decoder(ad.reshape(pooled, (b, n, -1)))

    def attention_weights(self, x) -> np.ndarray:
        """Attention of the first encoder layer; rows sum to 1."""
        x = self._check_input(x)
        b, n, w = x.shape
        tokens = self.embed(ad.reshape(Tensor(x), (b * n, w, 1))) + self.pos
        _, attn = self.layers[0](tokens, return_attn=True)
        return attn.value


# -- graph models -----------------------------------------------------------


class _PredefinedGraphModel(NeuralModel):
    """Shared plumbing for models driven by a fixed normalized adjacency."""

    def __init__(self, config, graph: Graph, seed=0):
        super().__init__(config, graph.n_nodes, seed)
        self.graph = graph
        self.a_hat = Tensor(normalize(graph))


class GRUGCNModel(_PredefinedGraphModel):
    """Time-then-space: encode each node's window with a gated recurrence,
    then propagate the encodings over the graph."""

    def __init__(self, config, graph, seed=0):
        super().__init__(config, graph, seed)
        d = config.hidden_size
        self.cell = self.child("cell", blocks.RecurrentCell(self._rng, 1, d))
        self.gcns = [self.child(f"gcn{i}", blocks.GCNLayer(
            self._rng, d, d, activation="relu"))
            for i in range(config.gcn_layers)]
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, d, config.horizon))

    def forward(self, x, train=False, rng=None):
        seq = ad.transpose(ad.reshape(x, x.shape + (1,)), (0, 2, 1, 3))
        h = self.cell.run(seq)
        for gcn in self.gcns:
            h = gcn(self.a_hat, h)
            if train and self.config.dropout > 0:
                h = ad.dropout(h, self.config.dropout, rng)
        return self.decoder(h)


class GCGRUModel(_PredefinedGraphModel):
    """Time-and-space: the graph convolution acts as the recurrent cell, so
    state and input are both propagated at every step."""

    def __init__(self, config, graph, seed=0):
        super().__init__(config, graph, seed)
        self.cell = self.child("cell", blocks.RecurrentCell(
            self._rng, 1, config.hidden_size, graph=True))
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, config.hidden_size, config.horizon))

    def forward(self, x, train=False, rng=None):
        seq = ad.transpose(ad.reshape(x, x.shape + (1,)), (0, 2, 1, 3))
        h = self.cell.run(seq, self.a_hat)
        if train and self.config.dropout > 0:
            h = ad.dropout(h, self.config.dropout, rng)
        return self.decoder(h)


class TGCNModel(_PredefinedGraphModel):
    """Time-and-space variant that propagates only the node features: a
    two-layer graph convolution feeds a dense recurrence, leaving the hidden
    state untouched by the graph."""

    def __init__(self, config, graph, seed=0):
        super().__init__(config, graph, seed)
        d = config.hidden_size
        self.gcn1 = self.child("gcn1", blocks.GCNLayer(self._rng, 1, d, "relu"))
        self.gcn2 = self.child("gcn2", blocks.GCNLayer(self._rng, d, d, "linear"))
        self.cell = self.child("cell", blocks.RecurrentCell(self._rng, d, d))
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, d, config.horizon))

    def forward(self, x, train=False, rng=None):
        seq = ad.transpose(ad.reshape(x, x.shape + (1,)), (0, 2, 1, 3))
        feats = self.gcn2(self.a_hat, self.gcn1(self.a_hat, seq))
        if train and self.config.dropout > 0:
            feats = ad.dropout(feats, self.config.dropout, rng)
        h = self.cell.run(feats)
        return self.decoder(h)


class AGCRNModel(NeuralModel):
    """Time-and-space recurrence over a learnable adjacency.

    Node embeddings define the adjacency (row-softmax of relu(E·Eᵀ)) and are
    concatenated to the inputs, so gating is embedding-conditioned.
    """

    def __init__(self, config, n_nodes, seed=0):
        super().__init__(config, n_nodes, seed)
        self.embedding = self.child("embedding", blocks.NodeEmbedding(
            self._rng, n_nodes, config.d_embed))
        self.cell = self.child("cell", blocks.RecurrentCell(
            self._rng, 1 + config.d_embed, config.hidden_size, graph=True))
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, config.hidden_size, config.horizon))

    def forward(self, x, train=False, rng=None):
        b, n, w = x.shape
        a_adapt = self.embedding.adaptive_adjacency()
        seq = ad.transpose(ad.reshape(x, (b, n, w, 1)), (0, 2, 1, 3))
        emb = ad.broadcast_to(
            ad.reshape(self.embedding.e, (1, 1, n, self.config.d_embed)),
            (b, w, n, self.config.d_embed))
        seq = ad.concat([seq, emb], axis=-1)
        h = self.cell.run(seq, a_adapt)
        if train and self.config.dropout > 0:
            h = ad.dropout(h, self.config.dropout, rng)
        return self.decoder(h)


class GraphWavenetModel(NeuralModel):
    """Time-then-space stack: dilated causal convolutions interleaved with
    graph convolutions on an embedding-derived adjacency, with residual
    connections; the last step's features decode to the horizon."""

    def __init__(self, config, n_nodes, seed=0):
        super().__init__(config, n_nodes, seed)
        c = config.channels
        self.embedding = self.child("embedding", blocks.NodeEmbedding(
            self._rng, n_nodes, config.d_embed))
        self.input_proj = self.child("input_proj", blocks.Linear(self._rng, 1, c))
        self.tcns = [self.child(f"tcn{i}", blocks.TemporalConvLayer(
            self._rng, c, c, config.kernel_size, dil))
            for i, dil in enumerate(config.dilations)]
        self.gcns = [self.child(f"gcn{i}", blocks.GCNLayer(self._rng, c, c))
                     for i in range(len(config.dilations))]
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, c, config.horizon))
        field = 1 + sum(t.history for t in self.tcns)
        if field > config.window:
            raise ConfigError(f"receptive field {field} exceeds window "
                              f"{config.window}")

    def forward(self, x, train=False, rng=None):
        b, n, w = x.shape
        a_adapt = self.embedding.adaptive_adjacency()
        h = self.input_proj(ad.transpose(ad.reshape(x, (b, n, w, 1)),
                                         (0, 2, 1, 3)))
        for tcn, gcn in zip(self.tcns, self.gcns):
            out = gcn(a_adapt, ad.relu(tcn(h)))
            if train and self.config.dropout > 0:
                out = ad.dropout(out, self.config.dropout, rng)
            h = h + out
        return self.decoder(h[:, -1])


class _AttentionGraphModel(NeuralModel):
    """Shared plumbing for the attention message-passing forecasters."""

    def __init__(self, config, graph, n_nodes, seed=0):
        super().__init__(config, n_nodes, seed)
        self.graph = graph
        self.mask = (graph.dense() > 0).astype(np.float64)
        d = config.hidden_size
        self.encoder = self.child("encoder", blocks.MLP(
            self._rng, [config.window, config.d_ff, d]))
        self.aggregators = [self.child(f"round{i}", blocks.AttentionAggregator(
            self._rng, d, hidden=config.d_ff))
            for i in range(config.rounds)]
        self.decoder = self.child("decoder", blocks.Decoder(
            self._rng, d, config.horizon))

    def _encode(self, x, train, rng):
        h = self.encoder(x)
        if train and self.config.dropout > 0:
            h = ad.dropout(h, self.config.dropout, rng)
        return h


class FCGNNModel(_AttentionGraphModel):
    """Presumed complete graph; attention reweighs every message."""

    def __init__(self, config, graph, seed=0):
        super().__init__(config, graph, graph.n_nodes, seed)

    def forward(self, x, train=False, rng=None):
        h = self._encode(x, train, rng)
        for agg in self.aggregators:
            h = agg(h, self.mask)
        return self.decoder(h)


class BPGNNModel(_AttentionGraphModel):
    """Bipartite variant: K virtual hub nodes aggregate, update, and relay
    between the households (2KN messages per round)."""

    def __init__(self, config, graph, seed=0):
        super().__init__(config, graph, graph.n_nodes, seed)
        self.k = graph.virtual_nodes
        self.virtual_init = self.param("virtual_init", self._rng.normal(
            0.0, 0.1, size=(self.k, config.hidden_size)))

    @property
    def total_nodes(self):
        return self.n_nodes + self.k

    def forward(self, x, train=False, rng=None):
        b = x.shape[0]
        h = self._encode(x, train, rng)
        virt = ad.broadcast_to(
            ad.reshape(self.virtual_init, (1, self.k, self.config.hidden_size)),
            (b, self.k, self.config.hidden_size))
        h = ad.concat([h, virt], axis=1)
        for agg in self.aggregators:
            h = agg(h, self.mask)
        return self.decoder(h[:, :self.n_nodes])


# -- registry and construction ------------------------------------------------

MODEL_REGISTRY = {}


def register(model_id):
    def deco(builder):
        MODEL_REGISTRY[model_id] = builder
        return builder
    return deco


register("seasonal_naive")(lambda cfg, graph, n, seed: SeasonalNaiveModel(cfg))
register("var")(lambda cfg, graph, n, seed: VARModel(cfg))
register("gru")(lambda cfg, graph, n, seed: GRUModel(cfg, n, seed))
register("transformer")(lambda cfg, graph, n, seed: TransformerModel(cfg, n, seed))
register("grugcn")(lambda cfg, graph, n, seed: GRUGCNModel(cfg, graph, seed))
register("gcgru")(lambda cfg, graph, n, seed: GCGRUModel(cfg, graph, seed))
register("tgcn")(lambda cfg, graph, n, seed: TGCNModel(cfg, graph, seed))
register("agcrn")(lambda cfg, graph, n, seed: AGCRNModel(cfg, n, seed))
register("graphwavenet")(lambda cfg, graph, n, seed: GraphWavenetModel(cfg, n, seed))
register("fcgnn")(lambda cfg, graph, n, seed: FCGNNModel(cfg, graph, seed))
register("bpgnn")(lambda cfg, graph, n, seed: BPGNNModel(cfg, graph, seed))


def build(config: ModelConfig, graph: Graph | None, n_nodes: int,
          seed: int = 0) -> ForecastModel:
    """Construct a model, enforcing (model_id, graph_source) compatibility."""
    source = config.graph_source
    if source == "signal":
        if graph is None:
            raise ConfigError(f"{config.model_id} needs a signal-based graph")
        if graph.kind != "signal":
            raise ConfigError(f"{config.model_id} requires a signal graph, "
                              f"got kind {graph.kind!r}")
    elif source == "full":
        graph = graph if graph is not None else full_graph(n_nodes)
        if graph.kind != "full":
            raise ConfigError(f"{config.model_id} requires the complete graph")
    elif source == "bipartite":
        graph = graph if graph is not None else bipartite_graph(
            n_nodes, config.k_virtual)
        if graph.kind != "bipartite":
            raise ConfigError(f"{config.model_id} requires a bipartite graph")
        if graph.virtual_nodes != config.k_virtual:
            raise ConfigError(
                f"graph has {graph.virtual_nodes} virtual nodes but the "
                f"config says k_virtual={config.k_virtual}")
    elif graph is not None:
        raise ConfigError(f"{config.model_id} (graph_source={source}) does not "
                          f"take a predefined graph")
    if graph is not None and graph.n_nodes != n_nodes:
        raise ConfigError(f"graph has {graph.n_nodes} nodes, panel has {n_nodes}")
    return MODEL_REGISTRY[config.model_id](config, graph, n_nodes, seed)


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_FORMAT = "stlfbench-checkpoint-v1"


def save_checkpoint(model: ForecastModel, path) -> Path:
    """Parameters as ``<path>.npz`` plus ``<path>.manifest.json``."""
    path = Path(path)
    if path.suffix == ".npz":
        path = path.with_suffix("")
    state = model.state_dict()
    np.savez_compressed(path.with_suffix(".npz"), **state)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "model_id": model.config.model_id,
        "config": dataclasses.asdict(model.config),
        "config_hash": model.config.hash(),
        "seed": getattr(model, "seed", None),
        "shapes": {k: list(v.shape) for k, v in state.items()},
    }
    path.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2))
    return path.with_suffix(".npz")


def load_checkpoint(path, graph: Graph | None = None,
                    n_nodes: int | None = None) -> ForecastModel:
    path = Path(path)
    if path.suffix == ".npz":
        path = path.with_suffix("")
    manifest = json.loads(path.with_suffix(".manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"not a checkpoint: {path}")
    cfg_dict = manifest["config"]
    cfg_dict["dilations"] = tuple(cfg_dict.get("dilations", ()))
    config = ModelConfig(**cfg_dict)
    with np.load(path.with_suffix(".npz")) as npz:
        state = {k: npz[k] for k in npz.files}
    model = build(config, graph, n_nodes if n_nodes is not None
                  else _nodes_from_state(manifest, state), manifest.get("seed") or 0)
    model.load_state_dict(state)
    return model


def _nodes_from_state(manifest, state):
    for key in ("embedding.e",):
        if key in state:
            return state[key].shape[0]
    raise ConfigError("pass n_nodes (or a graph) to load this checkpoint")
