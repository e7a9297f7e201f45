"""Property-based checks of the spec-level invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stlfbench.graphs import SimilarityMatrix, graph_from_dense, normalize, sparsify
from stlfbench.kernels import dtw_distance
from stlfbench.metrics import mae, mape, rmse
from stlfbench.panel import Scaler

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
positive = st.floats(0.5, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(3, 20)),
              elements=positive),
       st.integers(0, 2 ** 31 - 1))
def test_scaler_round_trip_within_1e9(values, seed):
    mean = values.mean(axis=1)
    std = np.maximum(values.std(axis=1), 1e-8)
    scaler = Scaler(mean, std)
    x = np.random.default_rng(seed).uniform(0.5, 1e3, size=values.shape)
    back = scaler.inverse(scaler.transform(x))
    assert np.max(np.abs(back - x) / np.abs(x)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 8)), elements=finite))
def test_dtw_bounds(a, b):
    d = dtw_distance(a, b)
    assert d >= 0.0
    assert dtw_distance(a, a) == 0.0
    if len(a) == len(b):
        assert d <= np.abs(a - b).sum() + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_threshold_edges_monotone_in_tau(seed, tau_a, tau_b):
    rng = np.random.default_rng(seed)
    m = rng.uniform(0, 1, size=(7, 7))
    m = (m + m.T) / 2
    np.fill_diagonal(m, 1.0)
    sim = SimilarityMatrix(m, "correntropy")
    lo, hi = sorted((tau_a, tau_b))
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        edges_lo = set((a, b) for a, b, _ in sparsify(sim, tau=lo).edges())
        edges_hi = set((a, b) for a, b, _ in sparsify(sim, tau=hi).edges())
    assert edges_hi.issubset(edges_lo)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_normalize_symmetric_with_bounded_spectrum(seed, n):
    rng = np.random.default_rng(seed)
    dense = np.triu(rng.uniform(0, 1, size=(n, n)) * (rng.random((n, n)) < 0.5), 1)
    dense = dense + dense.T
    a_hat = normalize(graph_from_dense(dense))
    assert np.array_equal(a_hat, a_hat.T)
    assert np.max(np.abs(np.linalg.eigvalsh(a_hat))) <= 1.0 + 1e-9


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 9)),
              elements=positive),
       arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 9)),
              elements=finite),
       st.floats(0.01, 50.0))
def test_metric_scaling_and_jensen(truth, noise, c):
    noise = np.resize(noise, truth.shape)
    pred = truth + noise
    assert rmse(truth, pred) >= mae(truth, pred) - 1e-12
    assert np.isclose(mae(c * truth, c * pred), c * mae(truth, pred), rtol=1e-9)
    assert np.isclose(mape(c * truth, c * pred), mape(truth, pred), rtol=1e-9)
