"""Minimal dense-tensor reverse-mode automatic differentiation.

Everything runs in float64 on numpy buffers.  A :class:`Tape` records nodes in
creation order, which is already a topological order for a forward build, so
the backward pass is a single reversed sweep that touches each node exactly
once.  Layers write their forward as a handful of fused primitives (linear,
conv2d, pooling, activations, losses) rather than long chains of elementwise
nodes; that keeps tapes short and desk-scale training fast.

The network forward applies the 1/sqrt(fan_in) feature scaling inside
``linear`` and ``conv2d`` themselves, not in the initialization of the
weights, so weight magnitudes remain directly comparable across prior
families when inspecting shrinkage.
"""

from __future__ import annotations

import math
import threading

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "linear_forward",
    "conv2d_forward",
    "max_pool2d",
    "activate",
    "loss",
    "mse_loss",
    "gaussian_nll_loss",
    "cross_entropy_loss",
    "adam_step",
    "AdamState",
    "set_debug",
]

_state = threading.local()
_DEBUG = False


def set_debug(flag: bool) -> None:
    """Enable per-op finiteness assertions (slow; for tests)."""
    global _DEBUG
    _DEBUG = bool(flag)


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Operation record for one forward/backward cycle."""

    def __init__(self):
        self.nodes: list[Tensor] = []
        self.consumed = False

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("tapes do not nest")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar used by the layers and losses
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, backward_fn, parents) -> Tensor:
    tape = _active_tape()
    needs = any(p.requires_grad or p._backward is not None for p in parents)
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced in forward op")
    if tape is not None and needs:
        out._backward = backward_fn
        out._tape = tape
        tape.nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._backward is not None):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / reduction primitives


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, bwd, (a, b))


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _record(out, bwd, (a, b))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, bwd, (a, b))


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data / b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _record(out, bwd, (a, b))


def square(a):
    a = _wrap(a)
    out = Tensor(a.data * a.data)

    def bwd(g):
        _accum(a, 2.0 * g * a.data)

    return _record(out, bwd, (a,))


def exp(a):
    a = _wrap(a)
    out = Tensor(np.exp(a.data))

    def bwd(g):
        _accum(a, g * out.data)

    return _record(out, bwd, (a,))


def log(a):
    a = _wrap(a)
    out = Tensor(np.log(a.data))

    def bwd(g):
        _accum(a, g / a.data)

    return _record(out, bwd, (a,))


def sqrt(a):
    a = _wrap(a)
    out = Tensor(np.sqrt(a.data))

    def bwd(g):
        _accum(a, 0.5 * g / out.data)

    return _record(out, bwd, (a,))


def softplus_t(a):
    """softplus on the tape; overflow-safe, derivative sigmoid."""
    a = _wrap(a)
    x = a.data
    val = np.where(x > 30.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 30.0))))
    out = Tensor(val)

    def bwd(g):
        _accum(a, g * _sigmoid_np(x))

    return _record(out, bwd, (a,))


def logaddexp(a, b):
    a, b = _wrap(a), _wrap(b)
    out = Tensor(np.logaddexp(a.data, b.data))

    def bwd(g):
        wa = _sigmoid_np(a.data - b.data)
        _accum(a, _unbroadcast(g * wa, a.data.shape))
        _accum(b, _unbroadcast(g * (1.0 - wa), b.data.shape))

    return _record(out, bwd, (a, b))


def tsum(a):
    a = _wrap(a)
    out = Tensor(np.asarray(a.data.sum()))

    def bwd(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _record(out, bwd, (a,))


def tmean(a):
    a = _wrap(a)
    out = Tensor(np.asarray(a.data.mean()))
    n = a.data.size

    def bwd(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape))

    return _record(out, bwd, (a,))


def reshape(a, shape):
    a = _wrap(a)
    out = Tensor(a.data.reshape(shape))
    orig = a.data.shape

    def bwd(g):
        _accum(a, g.reshape(orig))

    return _record(out, bwd, (a,))


def concat(tensors):
    """Concatenate 1-d tensors; used to flatten parameter collections."""
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data.ravel() for t in ts]))
    sizes = [t.data.size for t in ts]
    shapes = [t.data.shape for t in ts]

    def bwd(g):
        off = 0
        for t, n, shp in zip(ts, sizes, shapes):
            _accum(t, g[off : off + n].reshape(shp))
            off += n

    return _record(out, bwd, tuple(ts))


# ---------------------------------------------------------------------------
# network primitives


def linear_forward(x, w, b):
    """y = x w^T / sqrt(d_in) + b for x of shape (n, d_in), w of (d_out, d_in)."""
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    n, d_in = x.data.shape
    d_out, d_in_w = w.data.shape
    if d_in != d_in_w or b.data.shape != (d_out,):
        raise ValueError(
            f"linear shape mismatch: x{x.data.shape} w{w.data.shape} b{b.data.shape}"
        )
    scale = 1.0 / math.sqrt(d_in)
    out = Tensor(x.data @ w.data.T * scale + b.data)

    def bwd(g):
        _accum(x, (g @ w.data) * scale)
        _accum(w, (g.T @ x.data) * scale)
        _accum(b, g.sum(axis=0))

    return _record(out, bwd, (x, w, b))


def _im2col(x: np.ndarray, k: int):
    n, c, h, w = x.shape
    oh, ow = h - k + 1, w - k + 1
    s0, s1, s2, s3 = x.strides
    cols = np.lib.stride_tricks.as_strided(
        x, shape=(n, c, k, k, oh, ow), strides=(s0, s1, s2, s3, s2, s3), writeable=False
    )
    return cols.reshape(n, c * k * k, oh * ow), oh, ow


def conv2d_forward(x, k, b, padding: int = 0):
    """Stride-1 cross-correlation with bias and 1/sqrt(c_in k0^2) scaling.

    x: (n, c_in, h, w); k: (c_out, c_in, k0, k0); b: (c_out,).
    """
    x, k, b = _wrap(x), _wrap(k), _wrap(b)
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ValueError("conv2d expects 4-d input and kernel")
    n, c_in, h, w = x.data.shape
    c_out, c_in_k, k0, k1 = k.data.shape
    if c_in != c_in_k or k0 != k1 or b.data.shape != (c_out,):
        raise ValueError("conv2d shape mismatch")
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    hp, wp = xp.shape[2], xp.shape[3]
    if k0 > hp or k0 > wp:
        raise ValueError("kernel larger than (padded) input")
    scale = 1.0 / math.sqrt(c_in * k0 * k0)
    cols, oh, ow = _im2col(xp, k0)
    kmat = k.data.reshape(c_out, -1)
    out_data = np.einsum("of,nfp->nop", kmat, cols, optimize=True) * scale
    out_data = out_data.reshape(n, c_out, oh, ow) + b.data[None, :, None, None]
    out = Tensor(out_data)

    def bwd(g):
        gmat = g.reshape(n, c_out, oh * ow)
        gk = np.einsum("nop,nfp->of", gmat, cols, optimize=True) * scale
        _accum(k, gk.reshape(k.data.shape))
        _accum(b, g.sum(axis=(0, 2, 3)))
        if x.requires_grad or x._backward is not None:
            gcols = np.einsum("of,nop->nfp", kmat, gmat, optimize=True) * scale
            gx = np.zeros_like(xp)
            gcols = gcols.reshape(n, c_in, k0, k0, oh, ow)
            for i in range(k0):
                for j in range(k0):
                    gx[:, :, i : i + oh, j : j + ow] += gcols[:, :, i, j]
            if padding:
                gx = gx[:, :, padding:-padding, padding:-padding]
            _accum(x, gx)

    return _record(out, bwd, (x, k, b))


def max_pool2d(x, size: int = 2):
    """Non-overlapping max pooling with stride = size."""
    x = _wrap(x)
    n, c, h, w = x.data.shape
    if h % size or w % size:
        raise ValueError("pooling requires divisible spatial dims")
    oh, ow = h // size, w // size
    view = x.data.reshape(n, c, oh, size, ow, size)
    flat = view.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, size * size)
    idx = flat.argmax(axis=-1)
    out = Tensor(np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0])

    def bwd(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, oh, ow, size, size).transpose(0, 1, 2, 4, 3, 5).reshape(x.data.shape)
        _accum(x, gx)

    return _record(out, bwd, (x,))


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    x = _wrap(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g):
        _accum(x, g * (x.data > 0.0))

    return _record(out, bwd, (x,))


def tanh(x):
    x = _wrap(x)
    out = Tensor(np.tanh(x.data))

    def bwd(g):
        _accum(x, g * (1.0 - out.data * out.data))

    return _record(out, bwd, (x,))


def sigmoid(x):
    x = _wrap(x)
    out = Tensor(_sigmoid_np(x.data))

    def bwd(g):
        _accum(x, g * out.data * (1.0 - out.data))

    return _record(out, bwd, (x,))


def _log_softmax_np(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(x):
    x = _wrap(x)
    p = np.exp(_log_softmax_np(x.data))
    out = Tensor(p)

    def bwd(g):
        dot = (g * p).sum(axis=-1, keepdims=True)
        _accum(x, p * (g - dot))

    return _record(out, bwd, (x,))


def log_softmax(x):
    x = _wrap(x)
    ls = _log_softmax_np(x.data)
    out = Tensor(ls)

    def bwd(g):
        p = np.exp(ls)
        _accum(x, g - p * g.sum(axis=-1, keepdims=True))

    return _record(out, bwd, (x,))


_ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "log_softmax": log_softmax,
}


def activate(x, kind: str):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# losses (all mean-reduced scalars)


def mse_loss(pred, target):
    pred = _wrap(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise ValueError(f"mse shape mismatch {pred.data.shape} vs {t.shape}")
    diff = pred.data - t
    out = Tensor(np.asarray(np.mean(diff * diff)))
    n = diff.size

    def bwd(g):
        _accum(pred, g * 2.0 * diff / n)

    return _record(out, bwd, (pred,))


def gaussian_nll_loss(pred, target, obs_var: float = 1.0):
    """Mean Gaussian negative log-likelihood with fixed observation variance."""
    if obs_var <= 0.0:
        raise ValueError("observation variance must be > 0")
    pred = _wrap(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.data.shape != t.shape:
        raise ValueError(f"gaussian_nll shape mismatch {pred.data.shape} vs {t.shape}")
    diff = pred.data - t
    const = 0.5 * np.log(2.0 * np.pi * obs_var)
    out = Tensor(np.asarray(np.mean(const + diff * diff / (2.0 * obs_var))))
    n = diff.size

    def bwd(g):
        _accum(pred, g * diff / (obs_var * n))

    return _record(out, bwd, (pred,))


def cross_entropy_loss(logits, target):
    """Mean cross entropy from raw logits against integer class targets."""
    logits = _wrap(logits)
    t = np.asarray(target, dtype=np.int64)
    if logits.data.ndim != 2 or t.shape != (logits.data.shape[0],):
        raise ValueError("cross entropy expects (n, k) logits and (n,) int targets")
    ls = _log_softmax_np(logits.data)
    n = t.shape[0]
    out = Tensor(np.asarray(-np.mean(ls[np.arange(n), t])))

    def bwd(g):
        p = np.exp(ls)
        p[np.arange(n), t] -= 1.0
        _accum(logits, g * p / n)

    return _record(out, bwd, (logits,))


def loss(pred, target, kind: str, obs_var: float = 1.0):
    if kind == "mse":
        return mse_loss(pred, target)
    if kind == "gaussian_nll":
        return gaussian_nll_loss(pred, target, obs_var)
    if kind == "cross_entropy":
        return cross_entropy_loss(pred, target)
    raise ValueError(f"unknown loss {kind!r}")


# ---------------------------------------------------------------------------
# backward + optimizer


def backward(loss_tensor: Tensor) -> None:
    """Reverse sweep from a scalar loss; populates .grad on requires_grad leaves.

    The graph is single-use: the tape is cleared afterwards and a second call
    without a fresh forward raises.
    """
    if not isinstance(loss_tensor, Tensor) or loss_tensor.data.size != 1:
        raise ValueError("backward needs a scalar Tensor loss")
    tape = loss_tensor._tape
    if tape is None:
        raise RuntimeError("loss is not attached to a live tape (already consumed or built without one)")
    if tape.consumed:
        raise RuntimeError("backward already ran on this tape")
    tape.consumed = True
    loss_tensor.grad = np.ones_like(loss_tensor.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)
        node._backward = None
        node._tape = None
    tape.nodes.clear()


class AdamState:
    """Per-parameter first/second moment buffers and the step counter."""

    def __init__(self):
        self.m: dict[int, np.ndarray] = {}
        self.v: dict[int, np.ndarray] = {}
        self.t = 0


def adam_step(
    params,
    grads,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One Adam update with decoupled weight decay; mutates params in place."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        m = state.m.get(i)
        v = state.v.get(i)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[i] = m
        state.v[i] = v
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        if weight_decay:
            p.data = p.data - lr * (update + weight_decay * p.data)
        else:
            p.data = p.data - lr * update
    return params, state
