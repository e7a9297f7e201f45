"""Differentiable building blocks shared by the forecasting models.

Temporal units (recurrent cell, dilated causal convolution, attention
encoder), spatial units (graph convolution, attention message passing),
learnable node embeddings with adaptive adjacency, and the readout decoder.
Every block is pure given its parameters; tensors flow on the autodiff tape.

Array layout conventions: recurrent inputs are (B, T, N, d); anything
spatial keeps the node axis at -2 so graph mixing applies uniformly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError


def uniform_init(rng, shape, fan_in):
    """Uniform fan-in scaling, the package-wide default for weight matrices."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Block:
    """Parameter bookkeeping: named tensors plus named child blocks."""

    def __init__(self):
        self._params = {}
        self._children = {}

    def param(self, name, value) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def child(self, name, block):
        self._children[name] = block
        return block

    def params(self, prefix="") -> dict:
        out = {prefix + k: t for k, t in self._params.items()}
        for name, blk in self._children.items():
            out.update(blk.params(f"{prefix}{name}."))
        return out

    def state_dict(self) -> dict:
        return {k: t.value.copy() for k, t in self.params().items()}

    def load_state_dict(self, state):
        mine = self.params()
        missing = set(mine) - set(state)
        extra = set(state) - set(mine)
        if missing or extra:
            raise ShapeError(f"checkpoint mismatch: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        for k, t in mine.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.value.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != "
                                 f"parameter shape {t.value.shape}")
            t.value[...] = arr


class Linear(Block):
    def __init__(self, rng, d_in, d_out, bias=True):
        super().__init__()
        self.w = self.param("w", uniform_init(rng, (d_in, d_out), d_in))
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x):
        out = ad.linear(x, self.w)
        return out + self.b if self.b is not None else out


_ACTIVATIONS = {"linear": lambda t: t, "relu": ad.relu, "tanh": ad.tanh}


class MLP(Block):
    """Feed-forward map with the given layer widths; hidden layers use relu."""

    def __init__(self, rng, dims):
        super().__init__()
        self.layers = [self.child(f"l{i}", Linear(rng, a, b))
                       for i, (a, b) in enumerate(zip(dims, dims[1:]))]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return x


class GCNLayer(Block):
    """Graph convolution: act(Â·H·W + b)."""

    def __init__(self, rng, d_in, d_out, activation="linear"):
        super().__init__()
        if activation not in _ACTIVATIONS:
            raise ShapeError(f"unknown activation {activation!r}")
        self.activation = activation
        self.lin = self.child("lin", Linear(rng, d_in, d_out))

    def __call__(self, a_hat, h):
        h = ad.as_tensor(h)
        if a_hat.shape[-1] != h.shape[-2]:
            raise ShapeError(f"adjacency {a_hat.shape} does not match "
                             f"node axis of features {h.shape}")
        return _ACTIVATIONS[self.activation](self.lin(ad.mix(a_hat, h)))


def _lin_val(x, w):
    if ad.exact_enabled():
        return np.einsum("...k,kd->...d", x, w, optimize=False)
    return x.reshape(-1, x.shape[-1]).dot(w).reshape(x.shape[:-1] + (w.shape[1],))


def _mix_val(a, h):
    if ad.exact_enabled():
        return ad.sorted_sum(a[..., :, :, None] * h[..., None, :, :], axis=-2)
    return np.matmul(a, h)


def fused_gru_step(pz, pr, pc, h, vz, vr, vc, bz, br, bc, a=None):
    """One gated update as a single tape node with a hand-written backward.

    The recurrence dominates training cost; fusing the ~20 elementwise and
    linear ops per step into one node keeps the tape small.  ``a`` is the
    (optional) mixing operator: ndarray or Tensor (n, n).

        z  = sigmoid(pz + V_z·m(h) + b_z)      m = Â-mix or identity
        r  = sigmoid(pr + V_r·m(h) + b_r)
        c  = tanh(pc + V_c·m(r*h) + b_c)
        h' = (1 - z)*h + z*c
    """
    tensors = [ad.as_tensor(t) for t in (pz, pr, pc, h, vz, vr, vc, bz, br, bc)]
    pz, pr, pc, h, vz, vr, vc, bz, br, bc = tensors
    a_t = None
    av = None
    if a is not None:
        a_t = ad.as_tensor(a)
        av = a_t.value
        tensors.append(a_t)
    hv = h.value
    hm = _mix_val(av, hv) if av is not None else hv
    z = expit(pz.value + _lin_val(hm, vz.value) + bz.value)
    r = expit(pr.value + _lin_val(hm, vr.value) + br.value)
    rh = r * hv
    cm = _mix_val(av, rh) if av is not None else rh
    c = np.tanh(pc.value + _lin_val(cm, vc.value) + bc.value)
    out = (1.0 - z) * hv + z * c

    def bw(g):
        d = hv.shape[-1]
        dz = g * (c - hv) * z * (1.0 - z)
        dc = g * z * (1.0 - c * c)
        gh = g * (1.0 - z)
        # candidate path
        g_cm = dc.reshape(-1, d).dot(vc.value.T).reshape(hv.shape)
        g_rh = np.matmul(av.T, g_cm) if av is not None else g_cm
        dr = g_rh * hv * r * (1.0 - r)
        gh = gh + g_rh * r
        # gate path
        g_hm = (dz.reshape(-1, d).dot(vz.value.T)
                + dr.reshape(-1, d).dot(vr.value.T)).reshape(hv.shape)
        gh = gh + (np.matmul(av.T, g_hm) if av is not None else g_hm)
        hm2, cm2 = hm.reshape(-1, d), cm.reshape(-1, d)
        dz2, dr2, dc2 = (x.reshape(-1, d) for x in (dz, dr, dc))
        grads = [dz, dr, dc, gh,
                 hm2.T.dot(dz2), hm2.T.dot(dr2), cm2.T.dot(dc2),
                 dz2.sum(0), dr2.sum(0), dc2.sum(0)]
        if a_t is not None:
            ga = None
            if a_t.requires_grad:
                ga = (np.einsum("...nd,...md->nm", g_hm.reshape(-1, *hv.shape[-2:]),
                                hv.reshape(-1, *hv.shape[-2:]), optimize=True)
                      + np.einsum("...nd,...md->nm", g_cm.reshape(-1, *hv.shape[-2:]),
                                  rh.reshape(-1, *hv.shape[-2:]), optimize=True))
            grads.append(ga)
        return tuple(grads)

    return Tensor(out, _parents=tuple(tensors), _bw=bw)


class RecurrentCell(Block):
    """Gated recurrent cell; gate maps are dense or graph-convolutional.

    Update rule (z update gate, r reset gate, c candidate):

        z = sigmoid(U_z x + V_z h + b_z)
        r = sigmoid(U_r x + V_r h + b_r)
        c = tanh(U_c x + V_c (r*h) + b_c)
        h' = (1 - z)*h + z*c

    In the graph variant every gate input (x, h, and r*h) is propagated
    through Â first, i.e. the gate's linear map becomes a graph convolution
    of the concatenated [x, h].
    """

    def __init__(self, rng, d_x, d_h, graph=False):
        super().__init__()
        self.d_x, self.d_h, self.graph = d_x, d_h, graph
        for gate in ("z", "r", "c"):
            self.param(f"u{gate}", uniform_init(rng, (d_x, d_h), d_x + d_h))
            self.param(f"v{gate}", uniform_init(rng, (d_h, d_h), d_x + d_h))
            self.param(f"b{gate}", np.zeros(d_h))

    def input_projections(self, x, a_hat=None):
        """Precompute the x-dependent gate terms for a whole sequence."""
        if self.graph:
            x = ad.mix(a_hat, x)
        p = self._params
        return (ad.linear(x, p["uz"]), ad.linear(x, p["ur"]),
                ad.linear(x, p["uc"]))

    def step_from_projections(self, pz, pr, pc, h, a_hat=None):
        p = self._params
        return fused_gru_step(pz, pr, pc, h, p["vz"], p["vr"], p["vc"],
                              p["bz"], p["br"], p["bc"],
                              a_hat if self.graph else None)

    def step(self, x_t, h, a_hat=None):
        """One gated update; ``a_hat`` is required for graph cells."""
        if self.graph and a_hat is None:
            raise ShapeError("graph-convolutional cell requires A_hat")
        pz, pr, pc = self.input_projections(x_t, a_hat)
        return self.step_from_projections(pz, pr, pc, h, a_hat)

    def run(self, x_seq, a_hat=None):
        """Fold a (B, T, N, d_x) sequence into the final hidden state."""
        if self.graph and a_hat is None:
            raise ShapeError("graph-convolutional cell requires A_hat")
        b, t, n, _ = x_seq.shape
        pz, pr, pc = self.input_projections(x_seq, a_hat)
        h = Tensor(np.zeros((b, n, self.d_h)))
        for step in range(t):
            h = self.step_from_projections(pz[:, step], pr[:, step],
                                           pc[:, step], h, a_hat)
        return h


class TemporalConvLayer(Block):
    """Causal dilated convolution along the time axis (axis 1)."""

    def __init__(self, rng, d_in, d_out, kernel_size=2, dilation=1):
        super().__init__()
        self.kernel_size = kernel_size
        self.dilation = dilation
        fan = d_in * kernel_size
        self.taps = [self.param(f"w{m}", uniform_init(rng, (d_in, d_out), fan))
                     for m in range(kernel_size)]
        self.b = self.param("b", np.zeros(d_out))

    @property
    def history(self) -> int:
        """Steps of past context consumed beyond the current one."""
        return (self.kernel_size - 1) * self.dilation

    def __call__(self, x):
        t = x.shape[1]
        padded = ad.pad_axis(x, 1, self.history)
        out = None
        for m, w in enumerate(self.taps):
            # tap m reads x_{t - m*dilation}
            start = self.history - m * self.dilation
            term = ad.linear(padded[:, start:start + t], w)
            out = term if out is None else out + term
        return out + self.b


def tcn_forward(x, layers):
    """Stack causal conv layers (relu between) and return last-step features.

    ``x`` is (B, T, N, d).  Fails if the combined receptive field exceeds
    the window length.
    """
    field = 1 + sum(l.history for l in layers)
    if field > x.shape[1]:
        raise ShapeError(f"receptive field {field} exceeds window {x.shape[1]}")
    h = x
    for i, layer in enumerate(layers):
        h = layer(h)
        if i < len(layers) - 1:
            h = ad.relu(h)
    return h[:, -1]


class NodeEmbedding(Block):
    """Trainable per-node embedding; drives the adaptive adjacency."""

    def __init__(self, rng, n_nodes, d_embed, scale=0.1):
        super().__init__()
        self.e = self.param("e", rng.normal(0.0, scale, size=(n_nodes, d_embed)))

    def adaptive_adjacency(self) -> Tensor:
        """Row-stochastic adjacency: row-softmax(relu(E·Eᵀ))."""
        return adaptive_adjacency(self.e)


def adaptive_adjacency(e) -> Tensor:
    scores = ad.relu(ad.matmul_t(e, e))
    return ad.softmax(scores, axis=-1, node_axis=True)


class AttentionAggregator(Block):
    """Gated message passing: h_i' = φ_h(h_i, Σ_j α_ij·φ_e(h_i, h_j)).

    α_ij = sigmoid(φ_att(h_i, h_j)) so each message is gated independently
    rather than normalized competitively.  The neighbour sum is
    permutation-invariant; nodes without in-edges aggregate a zero vector.
    """

    def __init__(self, rng, d, hidden=None):
        super().__init__()
        hidden = hidden or d
        self.phi_e = self.child("phi_e", MLP(rng, [2 * d, hidden, d]))
        self.phi_att = self.child("phi_att", MLP(rng, [2 * d, hidden, 1]))
        self.phi_h = self.child("phi_h", MLP(rng, [2 * d, hidden, d]))

    def __call__(self, h, mask):
        """``h`` is (B, M, d); ``mask`` an (M, M) 0/1 array, mask[i, j] = 1
        iff node i receives messages from node j."""
        h = ad.as_tensor(h)
        b, m, d = h.shape
        hi = ad.broadcast_to(h[:, :, None, :], (b, m, m, d))
        hj = ad.broadcast_to(h[:, None, :, :], (b, m, m, d))
        pair = ad.concat([hi, hj], axis=-1)
        gate = ad.sigmoid(self.phi_att(pair))
        contrib = self.phi_e(pair) * gate * mask[None, :, :, None]
        agg = ad.nsum(contrib, axis=2)
        return self.phi_h(ad.concat([h, agg], axis=-1))


class Decoder(Block):
    """Linear readout from final hidden state (…, N, d_h) to (…, N, H)."""

    def __init__(self, rng, d_h, horizon):
        super().__init__()
        self.horizon = horizon
        self.lin = self.child("lin", Linear(rng, d_h, horizon))

    def __call__(self, h):
        return self.lin(h)


class LayerNorm(Block):
    def __init__(self, d, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(d))
        self.beta = self.param("beta", np.zeros(d))

    def __call__(self, x):
        mu = ad.tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = ad.tmean(centered * centered, axis=-1, keepdims=True)
        return centered / ad.sqrt(var + self.eps) * self.gamma + self.beta


def positional_encoding(length, d_model) -> np.ndarray:
    """Sinusoidal position code, (length, d_model)."""
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


class SelfAttentionEncoderLayer(Block):
    """Pre-norm transformer encoder layer over the time axis of (B*, T, d)."""

    def __init__(self, rng, d_model, n_heads=2, d_ff=None):
        super().__init__()
        if d_model % n_heads:
            raise ShapeError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        d_ff = d_ff or 2 * d_model
        for name in ("q", "k", "v", "o"):
            self.child(name, Linear(rng, d_model, d_model))
        self.ffn = self.child("ffn", MLP(rng, [d_model, d_ff, d_model]))
        self.norm1 = self.child("norm1", LayerNorm(d_model))
        self.norm2 = self.child("norm2", LayerNorm(d_model))

    def _split_heads(self, x, b, t):
        x = ad.reshape(x, (b, t, self.n_heads, self.d_head))
        return ad.transpose(x, (0, 2, 1, 3))

    def __call__(self, x, return_attn=False):
        b, t, d = x.shape
        xn = self.norm1(x)
        q = self._split_heads(self._children["q"](xn), b, t)
        k = self._split_heads(self._children["k"](xn), b, t)
        v = self._split_heads(self._children["v"](xn), b, t)
        scores = ad.bmm(q, ad.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(self.d_head))
        attn = ad.softmax(scores, axis=-1)
        mixed = ad.bmm(attn, v)
        mixed = ad.reshape(ad.transpose(mixed, (0, 2, 1, 3)), (b, t, d))
        x = x + self._children["o"](mixed)
        x = x + self.ffn(self.norm2(x))
        if return_attn:
            return x, attn
        return x
