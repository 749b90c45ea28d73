"""Dense float64 tensors with a reverse-mode gradient tape.

Every forward op records its parents and a local backward closure; backward()
walks the recorded graph once in reverse topological order and then clears it.
There is deliberately no vectorized backend abstraction: numpy arrays are the
storage, f64 the only dtype, and determinism beats speed everywhere.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np

from .errors import ConfigurationError, ValidationError

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation-mode forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = ()
        self._backward = None

    # ---- introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def detach(self):
        return Tensor(self.data.copy())

    # ---- operators -----------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return take(self, key)

    # ---- shape / reduction helpers --------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def tanh(self):
        return tanh(self)


class Parameter(Tensor):
    """A named trainable tensor. Names are dotted paths unique per model."""

    __slots__ = ("name",)

    def __init__(self, data, name):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out = Tensor(data)
    if req:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t, g):
    """Accumulate a contribution that may alias a live buffer (copies first)."""
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g)
        else:
            t.grad += g


def _accum_owned(t, g):
    """Accumulate a freshly allocated contribution (caller transfers ownership)."""
    if t.requires_grad:
        if t.grad is None:
            t.grad = g
        else:
            t.grad += g


# ---- primitive ops ------------------------------------------------------


def add(a, b):
    def backward(g):
        ga = _unbroadcast(g, a.data.shape)
        (_accum if ga is g else _accum_owned)(a, ga)
        gb = _unbroadcast(g, b.data.shape)
        (_accum if gb is g else _accum_owned)(b, gb)

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    def backward(g):
        ga = _unbroadcast(g, a.data.shape)
        (_accum if ga is g else _accum_owned)(a, ga)
        _accum_owned(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    def backward(g):
        _accum_owned(a, _unbroadcast(g * b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b):
    def backward(g):
        _accum_owned(a, _unbroadcast(g / b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(a.data / b.data, (a, b), backward)


def power(a, exponent):
    e = float(exponent)

    def backward(g):
        _accum_owned(a, g * e * np.power(a.data, e - 1.0))

    return _make(np.power(a.data, e), (a,), backward)


def matmul(a, b):
    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accum_owned(a, _unbroadcast(ga, a.data.shape))
        _accum_owned(b, _unbroadcast(gb, b.data.shape))

    return _make(a.data @ b.data, (a, b), backward)


def exp(a):
    out_data = np.exp(a.data)

    def backward(g):
        _accum_owned(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    def backward(g):
        _accum_owned(a, g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sqrt(a):
    out_data = np.sqrt(a.data)

    def backward(g):
        _accum_owned(a, g * 0.5 / out_data)

    return _make(out_data, (a,), backward)


def tanh(a):
    out_data = np.tanh(a.data)

    def backward(g):
        _accum_owned(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a):
    """Smooth GELU (tanh form); smoothness keeps finite differences honest."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * (x * x * x))
    t = np.tanh(inner)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        _accum_owned(a, g * da)

    return _make(out_data, (a,), backward)


def tsum(a, axis=None, keepdims=False):
    def backward(g):
        if axis is None:
            _accum_owned(a, np.broadcast_to(g, a.data.shape).copy())
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum_owned(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a, axis=None, keepdims=False):
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]

    def backward(g):
        gg = g / count
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accum_owned(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), backward)


def reshape(a, shape):
    def backward(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def transpose(a, axes):
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accum(a, g.transpose(inv))

    return _make(a.data.transpose(axes), (a,), backward)


def take(a, key):
    """Indexing with basic slices or integer arrays; scatter-add backward."""

    def backward(g):
        gz = np.zeros_like(a.data)
        np.add.at(gz, key, g)
        _accum_owned(a, gz)

    return _make(a.data[key], (a,), backward)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def embedding(table, ids):
    """Row lookup: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)

    def backward(g):
        gz = np.zeros_like(table.data)
        np.add.at(gz, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        _accum_owned(table, gz)

    return _make(table.data[ids], (table,), backward)


def stable_softmax(a, axis=-1):
    """Max-shifted softmax; rows with -inf entries get exact zeros there."""
    if a.data.shape[axis] == 0:
        raise ValidationError("softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accum_owned(a, out_data * (g - dot))

    return _make(out_data, (a,), backward)


softmax = stable_softmax


def log_softmax(a, axis=-1):
    if a.data.shape[axis] == 0:
        raise ValidationError("log_softmax over an empty axis")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g):
        soft = np.exp(out_data)
        _accum_owned(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward)


def dropout(a, p, rng, train=True):
    """Inverted dropout: Bernoulli keep-mask scaled by 1/(1-p); identity in eval."""
    if not train or p == 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout probability must be in [0, 1), got {p}")
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)

    def backward(g):
        _accum_owned(a, g * mask)

    return _make(a.data * mask, (a,), backward)


def layer_norm(x, gain, bias, eps=1e-5):
    """Standardize the last axis, then apply the affine (gain, bias).

    Fused primitive (single tape node) with the analytic backward; the
    standardization uses the biased variance plus eps under the square root.
    """
    d = x.data.shape[-1]
    if d == 0:
        raise ValidationError("layer_norm over an empty last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        gxhat = g * gain.data
        mean_g = gxhat.mean(axis=-1, keepdims=True)
        mean_gx = (gxhat * xhat).mean(axis=-1, keepdims=True)
        _accum_owned(x, inv * (gxhat - mean_g - xhat * mean_gx))
        red = tuple(range(g.ndim - 1))
        _accum_owned(gain, (g * xhat).sum(axis=red))
        _accum_owned(bias, g.sum(axis=red))

    return _make(out_data, (x, gain, bias), backward)


def cross_entropy_loss(logits, targets):
    """Mean negative log-likelihood over the batch, computed in log space."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ValidationError("cross_entropy_loss expects a (batch, classes) matrix")
    n, c = logits.data.shape
    if targets.shape != (n,):
        raise ValidationError("targets length must match the batch size")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ValidationError(f"target id out of range [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), targets] = 1.0
    ls = log_softmax(logits, axis=-1)
    picked = mul(ls, Tensor(onehot))
    return mul(tsum(picked), Tensor(-1.0 / n))


# ---- backward pass -------------------------------------------------------


def backward(loss):
    """Populate grads of every reachable tensor, then clear the graph."""
    if loss.data.size != 1:
        raise ValidationError("backward requires a scalar loss")
    if not loss.requires_grad:
        return
    topo = []
    visited = set()
    stack = [(loss, iter(loss._parents))]
    visited.add(id(loss))
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            if id(parent) not in visited and parent._backward is not None:
                visited.add(id(parent))
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
        if not advanced:
            topo.append(node)
            stack.pop()
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
    for node in topo:
        node._parents = ()
        node._backward = None
        if not isinstance(node, Parameter):
            node.grad = None


def zero_grads(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


# ---- finite-difference verification harness ------------------------------


class FiniteDiffReport:
    """Per-parameter max relative error, sorted worst-first."""

    def __init__(self, entries):
        self.entries = sorted(entries, key=lambda kv: -kv[1])

    @property
    def max_error(self):
        return self.entries[0][1] if self.entries else 0.0

    def __iter__(self):
        return iter(self.entries)

    def __str__(self):
        lines = [f"{name:40s} {err:.3e}" for name, err in self.entries]
        return "\n".join(lines)


def finite_diff_check(fn, params, h=1e-5):
    """Compare analytic grads of fn() against central differences.

    fn must be a deterministic closure over `params` returning a scalar
    Tensor. Relative error uses max(1, |analytic|, |numeric|) as denominator.
    """
    params = list(params)
    first = fn()
    if not np.isfinite(first.data).all():
        raise ValidationError("finite_diff_check: fn produced a non-finite value")
    second = fn()
    if not np.array_equal(first.data, second.data):
        raise ValidationError(
            "finite_diff_check: fn is nondeterministic (two evaluations differ); "
            "disable dropout or other randomness"
        )
    zero_grads(params)
    backward(second)
    analytic = {p.name: p.grad.copy() for p in params}

    entries = []
    for p in params:
        flat = p.data.reshape(-1)
        a_flat = analytic[p.name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            with no_grad():
                f_plus = float(fn().data)
            flat[i] = orig - h
            with no_grad():
                f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = a_flat[i]
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if err > worst:
                worst = err
        entries.append((p.name, worst))
    return FiniteDiffReport(entries)
