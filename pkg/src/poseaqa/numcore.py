"""Dense float64 arrays with reverse-mode autodiff.

Every differentiable op builds a node holding its parents and a closure that
maps the output gradient to one gradient per parent. ``backward`` walks the
graph in reverse topological order. Leaf tensors created with
``requires_grad=True`` accumulate into ``.grad``; intermediate gradients are
transient.

Ops accept optional leading batch dimensions where that is cheap to support
(matmul, linear, layer_norm, softmax, the conv family), which keeps the
training loop vectorised.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError

LN_EPS = 1e-5

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, op: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if (requires_grad and not _parents) else None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{rg}, op={self.op or 'leaf'})"

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def __pow__(self, p: float):
        return power(self, p)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def relu(self):
        return relu(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(data, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- graph traversal ------------------------------------------------------

@dataclass
class Tape:
    """Nodes of a recorded graph in topological order (inputs first)."""

    nodes: list[Tensor] = field(default_factory=list)

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def is_topological(self) -> bool:
        pos = {id(n): i for i, n in enumerate(self.nodes)}
        return all(pos[id(p)] < pos[id(n)] for n in self.nodes for p in n._parents if id(p) in pos)


def backward(loss: Tensor) -> None:
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor with requires_grad")
    tape = Tape.from_output(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += g
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _make(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None)

    return _make(ad / bd, (a, b), bw, "div")


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


# -- shape ops ------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def _is_basic(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(p is Ellipsis or p is None or isinstance(p, (slice, int, np.integer)) for p in parts)


def index(a: Tensor, idx) -> Tensor:
    src = a.shape
    basic = _is_basic(idx)

    def bw(g):
        out = np.zeros(src)
        if basic:
            out[idx] += g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), bw, "index")


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate gradient."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % a.ndim
    src = a.shape

    def bw(g):
        # scatter-add as a one-hot matmul: much faster than np.add.at
        gm = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        rest = gm.shape[indices.ndim:]
        onehot = np.zeros((indices.size, src[axis]))
        onehot[np.arange(indices.size), indices.reshape(-1)] = 1.0
        om = (onehot.T @ gm.reshape(indices.size, -1)).reshape((src[axis],) + rest)
        return (np.moveaxis(om, 0, axis),)

    return _make(np.take(a.data, indices, axis=axis), (a,), bw, "take")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    nd = tensors[0].ndim
    ax = axis % nd
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    try:
        data = np.concatenate([t.data for t in tensors], axis=ax)
    except ValueError as exc:
        raise ShapeError(f"concat shapes {[t.shape for t in tensors]} along axis {axis}: {exc}") from None
    return _make(data, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % (tensors[0].ndim + 1)
    return _make(np.stack([t.data for t in tensors], axis=ax), tensors,
                 lambda g: tuple(np.take(g, i, axis=ax) for i in range(len(tensors))), "stack")


def broadcast_to(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, src),), "broadcast")


# -- reductions -----------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


mean_pool = mean


def order_invariant_mean(a: Tensor, axis: int) -> Tensor:
    """Mean whose value is bit-identical under any permutation along ``axis``.

    Values are sorted before summation so the floating-point order is fixed.
    """
    axis = axis % a.ndim
    n = a.shape[axis]
    src = a.shape
    out = np.sort(a.data, axis=axis).sum(axis=axis) / n

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, src).copy(),)

    return _make(out, (a,), bw, "ordered_mean")


def tmax(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; the gradient goes to the first maximiser."""
    axis = axis % a.ndim
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)
    src = a.shape

    def bw(g):
        gk = g if keepdims else np.expand_dims(g, axis)
        full = np.zeros(src)
        np.put_along_axis(full, np.expand_dims(arg, axis), gk, axis=axis)
        return (full,)

    return _make(out if keepdims else np.squeeze(out, axis), (a,), bw, "max")


def max_pool(a: Tensor, axis: int) -> Tensor:
    return tmax(a, axis)


def masked_max(a: Tensor, mask: np.ndarray, axis: int) -> Tensor:
    """Max over entries where ``mask`` is true; each reduced slice needs one."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    if not mask.any(axis=axis).all():
        raise ContractError("masked_max: a reduced slice has no admissible entries")
    filled = np.where(mask, a.data, -np.inf)
    axis = axis % a.ndim
    arg = np.argmax(filled, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)
    src = a.shape

    def bw(g):
        full = np.zeros(src)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make(out, (a,), bw, "masked_max")


# -- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = np.matmul(ad, bd)
    except ValueError:
        raise ShapeError(f"matmul batch dimensions incompatible: {a.shape} @ {b.shape}") from None

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is (in, out)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    lead = x.shape[:-1]
    y = matmul(reshape(x, (-1, x.shape[-1])), w)
    if b is not None:
        y = y + b
    return reshape(y, lead + (w.shape[1],))


# -- normalisation / softmax ----------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)
    return _make(out, (x,), lambda g: (g - sm * g.sum(axis=axis, keepdims=True),), "log_softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs input {x.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    n = xd.shape[-1]

    def bw(g):
        gx = gxh = None
        red = tuple(range(g.ndim - 1))
        if x.requires_grad:
            gxh = g * gd
            gx = inv * (gxh - gxh.mean(axis=-1, keepdims=True)
                        - xhat * (gxh * xhat).sum(axis=-1, keepdims=True) / n)
        return (gx,
                (g * xhat).sum(axis=red) if gain.requires_grad else None,
                g.sum(axis=red) if bias.requires_grad else None)

    return _make(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """x / max(||x||, eps); an all-zero slice maps to zero."""
    xd = x.data
    nrm = np.sqrt((xd * xd).sum(axis=axis, keepdims=True))
    den = np.maximum(nrm, eps)
    out = xd / den
    active = nrm > eps

    def bw(g):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(active, (g - out * proj) / den, g / den),)

    return _make(out, (x,), bw, "l2_normalize")


# -- convolutions ---------------------------------------------------------

def temporal_conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1,
                    padding: int = 0, pad_mode: str = "edge") -> Tensor:
    """1-D convolution over axis -2 of ``x`` (..., T, C_in).

    ``kernel`` is (k, C_in, C_out). Padding repeats the boundary frame
    (``edge``) or inserts zero frames (``zero``).
    """
    k, cin, cout = kernel.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"temporal_conv1d: input channels {x.shape[-1]} vs kernel {kernel.shape}")
    T = x.shape[-2]
    Tp = T + 2 * padding
    if Tp < k:
        raise ShapeError(f"temporal_conv1d: {T} frames (+{padding} padding) shorter than kernel {k}")
    t_out = (Tp - k) // stride + 1
    starts = np.arange(t_out) * stride
    win = starts[:, None] + np.arange(k)[None, :] - padding  # (t_out, k) in unpadded coords
    if pad_mode == "edge":
        cols = take(x, np.clip(win, 0, T - 1), axis=-2)
    elif pad_mode == "zero":
        valid = (win >= 0) & (win < T)
        cols = take(x, np.clip(win, 0, T - 1), axis=-2) * valid[..., None].astype(np.float64)
    else:
        raise ContractError(f"unknown pad_mode {pad_mode!r}")
    lead = x.shape[:-2]
    cols = reshape(cols, lead + (t_out, k * cin))
    y = linear(cols, reshape(kernel, (k * cin, cout)), bias)
    return y


def _pad_hw(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    out = np.zeros(x.shape[:-3] + (x.shape[-3] + 2 * p, x.shape[-2] + 2 * p, x.shape[-1]))
    out[..., p:-p, p:-p, :] = x
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Spatial convolution of (..., H, W, C_in) with ``w`` (kh, kw, C_in, C_out), zero padding."""
    kh, kw, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv2d: input channels {x.shape[-1]} vs kernel {w.shape}")
    lead = x.shape[:-3]
    H, W = x.shape[-3], x.shape[-2]
    xp = _pad_hw(x.data.reshape((-1, H, W, cin)), padding)
    Hp, Wp = xp.shape[1], xp.shape[2]
    if Hp < kh or Wp < kw:
        raise ShapeError(f"conv2d: spatial size {(H, W)} too small for kernel {(kh, kw)}")
    ho = (Hp - kh) // stride + 1
    wo = (Wp - kw) // stride + 1
    n = xp.shape[0]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride][:, :ho, :wo]
    cols2 = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * cin)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = cols2 @ wmat
    if b is not None:
        out += b.data
    out = out.reshape(lead + (ho, wo, cout))
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols2.T @ g2).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
            if padding:
                gxp = gxp[:, padding:padding + H, padding:padding + W, :]
            gx = gxp.reshape(x.shape)
        if b is None:
            return gx, gw
        return gx, gw, (g2.sum(axis=0) if b.requires_grad else None)

    return _make(out, parents, bw, "conv2d")


def _window_sum(x: np.ndarray, size: int, stride: int, n_out: int, axis: int) -> np.ndarray:
    sl = [slice(None)] * x.ndim
    acc = None
    for i in range(size):
        sl[axis] = slice(i, i + stride * n_out, stride)
        acc = x[tuple(sl)].copy() if acc is None else acc + x[tuple(sl)]
    return acc


def _window_sum_adjoint(g: np.ndarray, size: int, stride: int, n_in: int, axis: int) -> np.ndarray:
    shape = list(g.shape)
    shape[axis] = n_in
    out = np.zeros(shape)
    sl = [slice(None)] * g.ndim
    n_out = g.shape[axis]
    for i in range(size):
        sl[axis] = slice(i, i + stride * n_out, stride)
        out[tuple(sl)] += g
    return out


def avg_pool2d(x: Tensor, size: int, stride: int, padding: int = 0) -> Tensor:
    """Average pooling over (H, W) of (..., H, W, C); padded cells count as zeros.

    Window sums are taken separably, rows then columns.
    """
    lead = x.shape[:-3]
    H, W, C = x.shape[-3:]
    xp = _pad_hw(x.data.reshape((-1, H, W, C)), padding)
    Hp, Wp = xp.shape[1], xp.shape[2]
    if Hp < size or Wp < size:
        raise ShapeError(f"avg_pool2d: spatial size {(H, W)} too small for window {size}")
    ho = (Hp - size) // stride + 1
    wo = (Wp - size) // stride + 1
    acc = _window_sum(_window_sum(xp, size, stride, ho, 1), size, stride, wo, 2)
    scale = 1.0 / (size * size)

    def bw(g):
        g4 = g.reshape(acc.shape) * scale
        gxp = _window_sum_adjoint(_window_sum_adjoint(g4, size, stride, Wp, 2), size, stride, Hp, 1)
        if padding:
            gxp = gxp[:, padding:padding + H, padding:padding + W, :]
        return (gxp.reshape(x.shape),)

    return _make((acc * scale).reshape(lead + (ho, wo, C)), (x,), bw, "avg_pool2d")


# -- recurrent cell -------------------------------------------------------

def gru_cell(x: Tensor, h: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One GRU step. params: w_ih (D_in, 3H), w_hh (H, 3H), b_ih (3H,), b_hh (3H,).

    Gate blocks are ordered reset, update, candidate.
    """
    w_ih, w_hh = params["w_ih"], params["w_hh"]
    H = w_hh.shape[0]
    if w_ih.shape[1] != 3 * H or w_hh.shape != (H, 3 * H) or x.shape[-1] != w_ih.shape[0] or h.shape[-1] != H:
        raise ShapeError(f"gru_cell: x {x.shape}, h {h.shape}, w_ih {w_ih.shape}, w_hh {w_hh.shape}")
    gi = linear(x, w_ih, params["b_ih"])
    gh = linear(h, w_hh, params["b_hh"])
    r = sigmoid(gi[..., :H] + gh[..., :H])
    z = sigmoid(gi[..., H:2 * H] + gh[..., H:2 * H])
    n = tanh(gi[..., 2 * H:] + r * gh[..., 2 * H:])
    return (1.0 - z) * n + z * h


# -- gradient checking ----------------------------------------------------

def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5,
               max_coords: int | None = None, seed: int = 0) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|).

    ``max_coords`` samples a seeded subset of coordinates for large inputs.
    """
    if not (0 < eps <= 1e-2):
        raise ContractError(f"eps must be in (0, 1e-2], got {eps}")
    if not x.requires_grad or not x.is_leaf:
        raise ContractError("grad_check needs a leaf tensor with requires_grad=True")
    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    x.zero_grad()
    loss = f(x)
    backward(loss)
    analytic = x.grad.copy()
    x.zero_grad()

    flat = x.data.reshape(-1)
    coords: Iterable[int] = range(flat.size)
    if max_coords is not None and flat.size > max_coords:
        coords = np.sort(np.random.default_rng(seed).choice(flat.size, max_coords, replace=False))
    worst = 0.0
    a_flat = analytic.reshape(-1)
    with no_grad():
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            fp = f(x).item()
            flat[i] = orig - eps
            fm = f(x).item()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            err = abs(a_flat[i] - num) / max(1.0, abs(a_flat[i]))
            worst = max(worst, err)
    return worst


def init_weight(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> Tensor:
    """Uniform(-b, b) with b = gain * sqrt(3 / fan_in): unit-variance outputs for unit-variance inputs."""
    bound = gain * np.sqrt(3.0 / fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape))


def zeros(*shape) -> Tensor:
    return parameter(np.zeros(shape))


def ones(*shape) -> Tensor:
    return parameter(np.ones(shape))
