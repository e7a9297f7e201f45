"""Graph construction from signal similarity, plus presumed topologies.

Predefined graphs come from pairwise similarity of the *training* slice of a
panel (leakage is a hard error), sparsified by threshold or k-nearest
neighbours.  Presumed topologies are the complete graph and the bipartite
hub graph with K virtual nodes.  :func:`normalize` produces the symmetric
self-loop normalization used by every graph convolution in the package.
"""

from __future__ import annotations

import dataclasses
import json
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp

from . import kernels
from .autodiff import sorted_sum
from .errors import DataError, LeakageError
from .panel import LoadPanel

SIGNAL_MEASURES = ("pearson", "euclidean", "dtw", "correntropy")


@dataclasses.dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric pairwise matrix plus the measure that produced it."""

    values: np.ndarray
    measure: str
    params: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise DataError(f"similarity matrix must be square, got {v.shape}")
        if self.measure not in SIGNAL_MEASURES:
            raise DataError(f"unknown measure {self.measure!r}")
        if np.abs(v - v.T).max() > 1e-9:
            raise DataError("similarity matrix is not symmetric")

    @property
    def is_distance(self) -> bool:
        return self.measure in ("euclidean", "dtw")

    def to_similarity(self) -> np.ndarray:
        """Similarity in a thresholdable orientation (higher = more alike).

        Distances are mapped through a Gaussian kernel exp(-d^2 / gamma)
        with gamma the mean off-diagonal squared distance, which makes all
        four measures commensurable before sparsification.
        """
        if not self.is_distance:
            return self.values.copy()
        d2 = self.values ** 2
        off = ~np.eye(len(d2), dtype=bool)
        gamma = d2[off].mean()
        if gamma <= 0.0:
            return np.ones_like(d2)
        return np.exp(-d2 / gamma)


@dataclasses.dataclass(frozen=True)
class Graph:
    """Weighted node graph, optionally with K virtual hub nodes appended."""

    adjacency: sp.csr_matrix
    n_nodes: int
    virtual_nodes: int = 0
    kind: str = "signal"
    meta: dict = dataclasses.field(default_factory=dict, compare=False)

    def __post_init__(self):
        adj = sp.csr_matrix(self.adjacency, dtype=np.float64)
        adj.eliminate_zeros()
        object.__setattr__(self, "adjacency", adj)
        m = self.n_nodes + self.virtual_nodes
        if adj.shape != (m, m):
            raise DataError(f"adjacency {adj.shape} inconsistent with "
                            f"{self.n_nodes}+{self.virtual_nodes} nodes")
        if self.kind not in ("signal", "full", "bipartite"):
            raise DataError(f"unknown graph kind {self.kind!r}")
        if adj.nnz and adj.data.min() < 0:
            raise DataError("edge weights must be non-negative")
        if adj.diagonal().any():
            raise DataError("self-loops are added at normalization, not stored")
        if (abs(adj - adj.T)).max() > 0:
            raise DataError("adjacency must be symmetric")
        if self.kind == "bipartite":
            orig = adj[:self.n_nodes, :self.n_nodes]
            virt = adj[self.n_nodes:, self.n_nodes:]
            if orig.nnz or virt.nnz:
                raise DataError("bipartite graphs connect only original to virtual nodes")

    @property
    def total_nodes(self) -> int:
        return self.n_nodes + self.virtual_nodes

    @property
    def n_edges(self) -> int:
        """Undirected edge count."""
        return self.adjacency.nnz // 2

    @property
    def directed_message_count(self) -> int:
        """Messages exchanged in one propagation round (2KN for bipartite)."""
        return self.adjacency.nnz

    def mean_degree(self) -> float:
        return self.adjacency.getnnz(axis=1).mean() if self.total_nodes else 0.0

    def dense(self) -> np.ndarray:
        return self.adjacency.toarray()

    def edges(self):
        """Unique undirected edges as (src, dst, weight) with src < dst."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))


def graph_from_dense(dense, kind="signal", virtual_nodes=0, meta=None) -> Graph:
    dense = np.asarray(dense, dtype=np.float64)
    n_total = dense.shape[0]
    return Graph(sp.csr_matrix(dense), n_total - virtual_nodes, virtual_nodes,
                 kind, meta or {})


# -- similarity matrices ---------------------------------------------------


def _training_series(panel: LoadPanel, period, train_end, zscore):
    if train_end is not None and period is not None:
        end = np.datetime64(pd.Timestamp(period[1]))
        if end > np.datetime64(pd.Timestamp(train_end)):
            raise LeakageError(
                f"graph leakage: similarity period ends {end}, after the "
                f"training boundary {train_end}")
    if period is None and train_end is not None:
        period = (panel.timestamps[0], train_end)
    sub = panel if period is None else panel.slice_period(*period)
    x = sub.values
    if x.shape[1] < 2:
        raise DataError("need at least 2 samples per node for similarity")
    if zscore:
        mu = x.mean(axis=1, keepdims=True)
        sd = x.std(axis=1, keepdims=True)
        sd = np.where(sd < 1e-12, 1.0, sd)
        x = (x - mu) / sd
    return x


def pearson_matrix(panel, period=None, train_end=None) -> SimilarityMatrix:
    """Pairwise Pearson correlation; zero-variance nodes correlate 0."""
    x = _training_series(panel, period, train_end, zscore=False)
    centered = x - x.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered * centered).sum(axis=1))
    flat = norms < 1e-12
    if flat.any():
        warnings.warn(f"{int(flat.sum())} node(s) have zero variance; "
                      "their correlations are reported as 0", RuntimeWarning)
    safe = np.where(flat, 1.0, norms)
    c = (centered @ centered.T) / np.outer(safe, safe)
    c[flat, :] = 0.0
    c[:, flat] = 0.0
    c = np.clip((c + c.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return SimilarityMatrix(c, "pearson")


def euclidean_matrix(panel, period=None, train_end=None, zscore=True,
                     prefer_native=True) -> SimilarityMatrix:
    """Pairwise Euclidean distance (series z-scored per node by default)."""
    x = _training_series(panel, period, train_end, zscore)
    d = kernels.pairwise(x, "euclidean", prefer_native=prefer_native)
    return SimilarityMatrix(d, "euclidean", {"zscore": zscore})


def dtw_matrix(panel, period=None, band=48, train_end=None, zscore=True,
               prefer_native=True) -> SimilarityMatrix:
    """Pairwise DTW distance with a Sakoe-Chiba band (default one day)."""
    if band is not None and band < 0:
        raise DataError("dtw band must be >= 0 or None")
    x = _training_series(panel, period, train_end, zscore)
    d = kernels.pairwise(x, "dtw", band=band, prefer_native=prefer_native)
    return SimilarityMatrix(d, "dtw", {"band": band, "zscore": zscore})


def correntropy_matrix(panel, period=None, sigma=None, train_end=None,
                       prefer_native=True) -> SimilarityMatrix:
    """Pairwise correntropy V(x,y) = mean_t exp(-(x_t-y_t)^2 / (2 sigma^2)).

    ``sigma=None`` applies the median heuristic over a deterministic sample
    of pairs.
    """
    x = _training_series(panel, period, train_end, zscore=False)
    if sigma is None:
        sigma = median_sigma(x)
    if sigma <= 0:
        raise DataError(f"correntropy sigma must be > 0, got {sigma}")
    v = kernels.pairwise(x, "correntropy", sigma=sigma,
                         prefer_native=prefer_native)
    return SimilarityMatrix(v, "correntropy", {"sigma": float(sigma)})


def median_sigma(x, max_pairs=64, seed=0) -> float:
    """Median of |x_i - x_j| over a sampled pair set (median heuristic)."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if len(pairs) > max_pairs:
        pick = rng.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[k] for k in pick]
    diffs = np.concatenate([np.abs(x[i] - x[j]) for i, j in pairs])
    return float(max(np.median(diffs), 1e-8))


# -- sparsification ----------------------------------------------------------


def sparsify(sim: SimilarityMatrix, rule="threshold", tau=None, k=None,
             target_degree=10.0) -> Graph:
    """Build a signal graph from a similarity matrix.

    ``threshold`` keeps edge (i, j), i != j, iff similarity >= tau, with the
    similarity as weight; ``tau=None`` picks the threshold by bisection so
    the mean node degree lands near ``target_degree``.  ``knn`` keeps each
    node's top-k neighbours and symmetrizes by union.  Distances are
    converted to similarities first; Pearson thresholds the raw coefficient
    and never turns negative correlations into edges.
    """
    s = sim.to_similarity()
    n = s.shape[0]
    np.fill_diagonal(s, 0.0)
    if sim.measure == "pearson":
        s = np.where(s > 0.0, s, 0.0)

    if rule == "threshold":
        if tau is None:
            tau = _degree_matched_threshold(s, target_degree)
        keep = s >= tau
        if sim.measure == "pearson":
            keep &= s > 0.0
        np.fill_diagonal(keep, False)
        dense = np.where(keep, s, 0.0)
    elif rule == "knn":
        if k is None or not 1 <= k < n:
            raise DataError(f"knn requires 1 <= k < {n}, got {k}")
        dense = np.zeros_like(s)
        order = np.argsort(-s, axis=1, kind="stable")
        for i in range(n):
            picked = [j for j in order[i] if j != i][:k]
            dense[i, picked] = s[i, picked]
        dense = np.maximum(dense, dense.T)  # union symmetrization
    else:
        raise DataError(f"unknown sparsify rule {rule!r}")

    if not dense.any():
        warnings.warn("sparsification produced an edgeless graph", RuntimeWarning)
    meta = {"measure": sim.measure, "params": dict(sim.params), "rule": rule,
            "tau": None if tau is None else float(tau), "k": k}
    return graph_from_dense(dense, kind="signal", meta=meta)


def _degree_matched_threshold(s, target_degree, iters=60):
    off = s[~np.eye(len(s), dtype=bool)]
    lo, hi = float(off.min()), float(off.max())

    def mean_degree(tau):
        keep = s >= tau
        np.fill_diagonal(keep, False)
        return keep.sum(axis=1).mean()

    if mean_degree(lo) <= target_degree:
        return lo
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mean_degree(mid) > target_degree:
            lo = mid
        else:
            hi = mid
    # pick whichever side lands closer to the target
    return lo if abs(mean_degree(lo) - target_degree) <= \
        abs(mean_degree(hi) - target_degree) else hi


# -- presumed topologies -----------------------------------------------------


def full_graph(n: int) -> Graph:
    """Complete graph with unit weights (N(N-1) directed messages)."""
    if n < 2:
        raise DataError("full graph needs at least 2 nodes")
    dense = np.ones((n, n)) - np.eye(n)
    return graph_from_dense(dense, kind="full")


def bipartite_graph(n: int, k: int) -> Graph:
    """K virtual hub nodes, each connected to all N original nodes.

    One propagation round exchanges 2KN directed messages.
    """
    if n < 2 or k < 1:
        raise DataError("bipartite graph needs N >= 2 original and K >= 1 virtual nodes")
    m = n + k
    dense = np.zeros((m, m))
    dense[:n, n:] = 1.0
    dense[n:, :n] = 1.0
    return graph_from_dense(dense, kind="bipartite", virtual_nodes=k)


def normalize(graph: Graph) -> np.ndarray:
    """Symmetric self-loop normalization D̃^{-1/2} (A + I) D̃^{-1/2}.

    Degree sums are order-canonical so a relabelled graph normalizes to the
    identically relabelled operator, bit for bit.
    """
    if graph.kind == "bipartite":
        raise DataError("bipartite graphs are consumed via attention, not GCN "
                        "normalization")
    a = graph.dense()
    a = a + np.eye(a.shape[0])
    degree = sorted_sum(a, axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    a_hat = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return (a_hat + a_hat.T) / 2.0


# -- import/export -------------------------------------------------------------

GRAPH_FORMAT = "stlfbench-graph-v1"


def save_graph(graph: Graph, path) -> Path:
    """Single text file: JSON header line, then ``src,dst,weight`` rows.

    Weights are written with 17 significant digits, so a round trip is
    exact.
    """
    path = Path(path)
    header = {
        "format": GRAPH_FORMAT,
        "kind": graph.kind,
        "n_nodes": graph.n_nodes,
        "virtual_nodes": graph.virtual_nodes,
        **{k: v for k, v in graph.meta.items() if v is not None},
    }
    lines = [json.dumps(header)]
    lines += [f"{s},{d},{w:.17g}" for s, d, w in graph.edges()]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_graph(path) -> Graph:
    path = Path(path)
    lines = path.read_text().strip().splitlines()
    header = json.loads(lines[0])
    if header.get("format") != GRAPH_FORMAT:
        raise DataError(f"not a graph file: {path}")
    n = header["n_nodes"]
    k = header.get("virtual_nodes", 0)
    dense = np.zeros((n + k, n + k))
    for line in lines[1:]:
        if not line.strip():
            continue
        src, dst, w = line.split(",")
        dense[int(src), int(dst)] = float(w)
        dense[int(dst), int(src)] = float(w)
    meta = {key: header[key] for key in header
            if key not in ("format", "kind", "n_nodes", "virtual_nodes")}
    return graph_from_dense(dense, kind=header["kind"], virtual_nodes=k, meta=meta)
