"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

The engine exposes two numeric execution paths:

* the fast path (default) uses BLAS-backed ``matmul`` and plain axis sums,
  and is what training runs on;
* the exact path (inside :func:`exact_mode`) contracts with
  ``einsum(optimize=False)`` and reduces over node axes by sorting the
  addends first.  Sorted reduction makes every cross-node sum a function of
  the *multiset* of addends, so relabelling graph nodes permutes outputs
  bit-identically.  ``forecast`` runs on this path.

Only the ops the forecasting blocks need are implemented; gradients are
checked against central finite differences in the test suite.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import expit

_EXACT = False
_NO_GRAD = False


@contextlib.contextmanager
def exact_mode(enabled=True):
    """Context manager switching node reductions to the order-canonical path."""
    global _EXACT
    previous = _EXACT
    _EXACT = enabled
    try:
        yield
    finally:
        _EXACT = previous


@contextlib.contextmanager
def no_grad():
    """Skip graph recording entirely (inference)."""
    global _NO_GRAD
    previous = _NO_GRAD
    _NO_GRAD = True
    try:
        yield
    finally:
        _NO_GRAD = previous


def exact_enabled() -> bool:
    return _EXACT


def sorted_sum(values: np.ndarray, axis: int) -> np.ndarray:
    """Sum along ``axis`` after sorting, so the result is order-canonical."""
    return np.sort(values, axis=axis).sum(axis=axis)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


#: sentinel a backward closure returns after writing into the parent's grad
#: buffer itself (avoids a full-size scratch allocation for scatter ops)
ACCUMULATED = object()


def _ensure_grad(t: "Tensor") -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    return t.grad


class Tensor:
    """A node in the reverse-mode graph. ``value`` is always float64."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_bw")

    def __init__(self, value, requires_grad=False, _parents=(), _bw=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        if _NO_GRAD:
            self.requires_grad = False
        else:
            self.requires_grad = requires_grad or any(
                p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._bw = _bw if self.requires_grad else None

    # -- numpy-ish surface -------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"

    def detach(self) -> np.ndarray:
        return self.value

    # -- operators -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self, grad=None):
        """Accumulate gradients of a scalar (or given seed) into the graph."""
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = _toposort(self)
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in order:
            if node._bw is None:
                continue
            gs = node._bw(node.grad)
            for parent, g in zip(node._parents, gs):
                if g is None or g is ACCUMULATED or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    # copy: backward closures may hand out views of shared
                    # buffers, and this buffer will be mutated by +=
                    parent.grad = np.array(g)
                else:
                    parent.grad += g


def _toposort(root: Tensor):
    seen = set()
    order = []
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return reversed(order)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grads(params):
    for p in params:
        p.grad = None


# -- elementwise ----------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, _parents=(a, b),
                 _bw=lambda g: (_unbroadcast(g, a.value.shape),
                                _unbroadcast(g, b.value.shape)))
    return out


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value - b.value, _parents=(a, b),
                  _bw=lambda g: (_unbroadcast(g, a.value.shape),
                                 _unbroadcast(-g, b.value.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value * b.value, _parents=(a, b),
                  _bw=lambda g: (_unbroadcast(g * b.value, a.value.shape),
                                 _unbroadcast(g * a.value, b.value.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(a.value / b.value, _parents=(a, b),
                  _bw=lambda g: (_unbroadcast(g / b.value, a.value.shape),
                                 _unbroadcast(-g * a.value / b.value ** 2,
                                              b.value.shape)))


def absolute(a):
    a = as_tensor(a)
    return Tensor(np.abs(a.value), _parents=(a,),
                  _bw=lambda g: (g * np.sign(a.value),))


def exp(a):
    a = as_tensor(a)
    out_value = np.exp(a.value)
    return Tensor(out_value, _parents=(a,), _bw=lambda g: (g * out_value,))


def log(a):
    a = as_tensor(a)
    return Tensor(np.log(a.value), _parents=(a,), _bw=lambda g: (g / a.value,))


def sqrt(a):
    a = as_tensor(a)
    out_value = np.sqrt(a.value)
    return Tensor(out_value, _parents=(a,),
                  _bw=lambda g: (g / (2.0 * out_value),))


def tanh(a):
    a = as_tensor(a)
    out_value = np.tanh(a.value)
    return Tensor(out_value, _parents=(a,),
                  _bw=lambda g: (g * (1.0 - out_value ** 2),))


def sigmoid(a):
    a = as_tensor(a)
    out_value = expit(a.value)
    return Tensor(out_value, _parents=(a,),
                  _bw=lambda g: (g * out_value * (1.0 - out_value),))


def relu(a):
    a = as_tensor(a)
    return Tensor(np.maximum(a.value, 0.0), _parents=(a,),
                  _bw=lambda g: (g * (a.value > 0.0),))


def dropout(a, p, rng):
    """Inverted dropout; identity when p == 0."""
    a = as_tensor(a)
    if p <= 0.0:
        return a
    mask = (rng.random(a.value.shape) >= p) / (1.0 - p)
    return Tensor(a.value * mask, _parents=(a,), _bw=lambda g: (g * mask,))


# -- contractions ----------------------------------------------------------


def linear(x, w):
    """Contract the last axis of ``x`` with a 2-D weight ``w``.

    Exact path uses einsum, whose per-element reduction order does not
    depend on the position of a row, keeping node permutations bitwise.
    """
    x, w = as_tensor(x), as_tensor(w)
    if exact_enabled():
        out_value = np.einsum("...k,kd->...d", x.value, w.value, optimize=False)
    else:
        flat = x.value.reshape(-1, x.value.shape[-1])
        out_value = (flat @ w.value).reshape(x.value.shape[:-1] + (w.value.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.value.reshape(-1, x.value.shape[-1])
        gx = (g2 @ w.value.T).reshape(x.value.shape)
        gw = x2.T @ g2
        return gx, gw

    return Tensor(out_value, _parents=(x, w), _bw=bw)


def mix(a, h):
    """Graph mixing ``Â·H`` over the node axis (axis -2 of ``h``).

    ``a`` is an (n, n) operator (ndarray or Tensor); ``h`` is (..., n, d).
    The exact path forms the products explicitly and reduces them with an
    order-canonical sorted sum.
    """
    a, h = as_tensor(a), as_tensor(h)
    if exact_enabled():
        prod = a.value[..., :, :, None] * h.value[..., None, :, :]
        out_value = sorted_sum(prod, axis=-2)
    else:
        out_value = np.matmul(a.value, h.value)

    def bw(g):
        gh = np.matmul(a.value.T, g)
        ga = None
        if a.requires_grad:
            n, d = g.shape[-2:]
            m = h.value.shape[-2]
            g3 = g.reshape(-1, n, d)
            h3 = h.value.reshape(-1, m, d)
            ga = np.einsum("bnd,bmd->nm", g3, h3, optimize=True)
        return ga, gh

    return Tensor(out_value, _parents=(a, h), _bw=bw)


def bmm(x, y):
    """Batched matmul for equal leading dims: (..., a, b) @ (..., b, c)."""
    x, y = as_tensor(x), as_tensor(y)
    if x.value.shape[:-2] != y.value.shape[:-2]:
        raise ValueError(f"bmm leading dims differ: {x.shape} vs {y.shape}")
    if exact_enabled():
        out_value = np.einsum("...ab,...bc->...ac", x.value, y.value,
                              optimize=False)
    else:
        out_value = np.matmul(x.value, y.value)

    def bw(g):
        gx = np.matmul(g, np.swapaxes(y.value, -1, -2))
        gy = np.matmul(np.swapaxes(x.value, -1, -2), g)
        return gx, gy

    return Tensor(out_value, _parents=(x, y), _bw=bw)


def matmul_t(x, y):
    """``x @ y.T`` for 2-D tensors; used for embedding pair scores."""
    x, y = as_tensor(x), as_tensor(y)
    if exact_enabled():
        out_value = np.einsum("ik,jk->ij", x.value, y.value, optimize=False)
    else:
        out_value = x.value @ y.value.T

    def bw(g):
        return g @ y.value, g.T @ x.value

    return Tensor(out_value, _parents=(x, y), _bw=bw)


# -- reductions ------------------------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_value = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.value.shape),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.value.shape),)

    return Tensor(out_value, _parents=(a,), _bw=bw)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.value.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.value.shape[i] for i in axis]))
    else:
        n = a.value.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def nsum(a, axis, keepdims=False):
    """Sum over a node axis; order-canonical on the exact path."""
    a = as_tensor(a)
    if exact_enabled():
        out_value = sorted_sum(a.value, axis=axis)
    else:
        out_value = a.value.sum(axis=axis)
    if keepdims:
        out_value = np.expand_dims(out_value, axis)

    def bw(g):
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, a.value.shape),)

    return Tensor(out_value, _parents=(a,), _bw=bw)


def softmax(a, axis=-1, node_axis=False):
    """Numerically stable softmax; ``node_axis`` reduces order-canonically."""
    a = as_tensor(a)
    shift = a - np.max(a.value, axis=axis, keepdims=True)
    e = exp(shift)
    reducer = nsum if node_axis else tsum
    return e / reducer(e, axis=axis, keepdims=True)


# -- shape ops ---------------------------------------------------------------


def reshape(a, shape):
    a = as_tensor(a)
    return Tensor(a.value.reshape(shape), _parents=(a,),
                  _bw=lambda g: (g.reshape(a.value.shape),))


def transpose(a, axes):
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return Tensor(a.value.transpose(axes), _parents=(a,),
                  _bw=lambda g: (g.transpose(inverse),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    return Tensor(np.broadcast_to(a.value, shape).copy(), _parents=(a,),
                  _bw=lambda g: (_unbroadcast(g, a.value.shape),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    out_value = np.concatenate([t.value for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return Tensor(out_value, _parents=tuple(tensors), _bw=bw)


def getitem(a, idx):
    """Basic (slice / integer) indexing with gradient scatter-add."""
    a = as_tensor(a)

    def bw(g):
        # scatter straight into the parent's buffer: a fresh full-size
        # scratch array per time-step slice dominated training cost
        _ensure_grad(a)[idx] += g
        return (ACCUMULATED,)

    return Tensor(a.value[idx], _parents=(a,), _bw=bw)


def pad_axis(a, axis, before, after=0):
    """Zero-pad along one axis (used for causal temporal convolutions)."""
    a = as_tensor(a)
    widths = [(0, 0)] * a.value.ndim
    widths[axis] = (before, after)
    sl = [slice(None)] * a.value.ndim
    sl[axis] = slice(before, before + a.value.shape[axis])
    sl = tuple(sl)
    return Tensor(np.pad(a.value, widths), _parents=(a,),
                  _bw=lambda g: (g[sl],))
