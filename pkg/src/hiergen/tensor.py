"""Dense float64 tensors with a record-on-forward tape for reverse-mode differentiation.

Every op that touches a tensor requiring gradients records a node holding its
parents and a closure mapping the output adjoint to the input adjoints.  Node
ids come from a global counter, so sorting reachable nodes by id in descending
order replays the tape in exact reverse of the forward recording.

Broadcasting is deliberately limited to adding a bias vector along the last
axis; every other binary op requires equal shapes (or a Python scalar).
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .exceptions import DimensionError, DomainError

_ids = itertools.count()
_local = threading.local()

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def is_grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording in the current thread."""
    prev = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


class Tensor:
    """An n-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward", "_id")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = "leaf"
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None
        self._id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def record(data: np.ndarray, parents: Iterable[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap an op result, attaching it to the tape when any parent needs gradients.

    ``backward_fn`` receives the output adjoint and returns one adjoint (or None)
    per parent, in order.
    """
    parents = tuple(parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    out._id = next(_ids)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """Accumulate dloss/dleaf into ``.grad`` of every reachable leaf requiring gradients.

    Repeated calls without clearing ``.grad`` accumulate.
    """
    if loss.data.size != 1 and grad is None:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t._id in nodes:
            continue
        nodes[t._id] = t
        stack.extend(p for p in t._parents if p.requires_grad)
    adjoints = {loss._id: np.ones_like(loss.data) if grad is None else np.asarray(grad, dtype=np.float64)}
    for t in sorted(nodes.values(), key=lambda n: n._id, reverse=True):
        g = adjoints.pop(t._id, None)
        if g is None:
            continue
        if t._backward is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for p, pg in zip(t._parents, t._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            if p._id in adjoints:
                adjoints[p._id] = adjoints[p._id] + pg
            else:
                adjoints[p._id] = pg


# ---------------------------------------------------------------------------
# binary ops


def _bias_axes(big: tuple, small: tuple) -> Optional[tuple]:
    """Axes to sum over when ``small`` is a bias broadcast against ``big``; None if not allowed."""
    if big == small:
        return ()
    if len(small) == 1 and len(big) >= 1 and big[-1] == small[0]:
        return tuple(range(len(big) - 1))
    if len(small) == 0:
        return tuple(range(len(big)))
    return None


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise sum; one operand may be a bias vector matching the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape == b.shape:
        sa, sb = (), ()
    elif (axes := _bias_axes(a.shape, b.shape)) is not None:
        sa, sb = (), axes
    elif (axes := _bias_axes(b.shape, a.shape)) is not None:
        sa, sb = axes, ()
    else:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} are incompatible")

    def bw(g):
        ga = g.sum(axis=sa) if sa else g
        gb = g.sum(axis=sb) if sb else g
        return ga, gb

    return record(a.data + b.data, (a, b), bw, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    return add(a, mul(b, -1.0))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Elementwise product of equal-shape operands, or scaling by a Python number."""
    if isinstance(b, (int, float)):
        a = as_tensor(a)
        s = float(b)
        return record(a.data * s, (a,), lambda g: (g * s,), "scale")
    if isinstance(a, (int, float)):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    ad, bd = a.data, b.data
    return record(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product for 1-D/2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul: only 1-D/2-D operands, got {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[0]
    if ka != kb:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad

    return record(ad @ bd, (a, b), bw, "matmul")


# ---------------------------------------------------------------------------
# unary elementwise


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return record(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return record(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,), "relu")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return record(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return record(y, (x,), lambda g: (g * y,), "exp")


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log: input contains non-positive values")
    xd = x.data
    return record(np.log(xd), (x,), lambda g: (g / xd,), "log")


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; a single input is returned unchanged."""
    if len(tensors) == 0:
        raise ValueError("concat: empty input list")
    ts = [as_tensor(t) for t in tensors]
    if len(ts) == 1:
        return ts[0]
    ndim = ts[0].ndim
    ax = axis % ndim
    for t in ts[1:]:
        if t.ndim != ndim or any(t.shape[d] != ts[0].shape[d] for d in range(ndim) if d != ax):
            raise DimensionError(f"concat: shapes {[t.shape for t in ts]} differ off axis {axis}")
    sizes = [t.shape[ax] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return np.split(g, cuts, axis=ax)

    return record(np.concatenate([t.data for t in ts], axis=ax), ts, bw, "concat")


def stack(tensors: Sequence[ArrayLike]) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    if len(tensors) == 0:
        raise ValueError("stack: empty input list")
    ts = [as_tensor(t) for t in tensors]
    shape = ts[0].shape
    if any(t.shape != shape for t in ts):
        raise DimensionError(f"stack: shapes {[t.shape for t in ts]} differ")
    return record(np.stack([t.data for t in ts]), ts, lambda g: list(g), "stack")


def reshape(x: ArrayLike, shape: tuple) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose: expected 2-D, got {x.shape}")
    return record(x.data.T, (x,), lambda g: (g.T,), "transpose")


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(x: ArrayLike, idx) -> Tensor:
    """Indexing with slices, ints, or integer arrays (repeated indices accumulate)."""
    x = as_tensor(x)
    shape = x.shape
    basic = _is_basic_index(idx)

    def bw(g):
        out = np.zeros(shape)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return record(np.array(x.data[idx]), (x,), bw, "getitem")


def take_rows(table: ArrayLike, ids: Sequence[int]) -> Tensor:
    """Embedding lookup: rows of a 2-D table."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise DimensionError(f"take_rows: ids must be 1-D, got {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"take_rows: id out of range for table with {table.shape[0]} rows")
    shape = table.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, ids, g)
        return (out,)

    return record(table.data[ids], (table,), bw, "take_rows")


# ---------------------------------------------------------------------------
# reductions


def sum(x: ArrayLike, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    shape = x.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return record(np.asarray(x.data.sum(axis=axis)), (x,), bw, "sum")


def mean(x: ArrayLike, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis), 1.0 / n)


# ---------------------------------------------------------------------------
# normalisers


def _masked(x: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return x
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise DimensionError(f"mask shape {mask.shape} != input shape {x.shape}")
    return np.where(mask, x, -np.inf)


def softmax(x: ArrayLike, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis.  ``mask`` marks positions kept (True); others get zero weight."""
    x = as_tensor(x)
    if x.shape[-1] == 0:
        raise ValueError("softmax: empty input")
    z = _masked(x.data, mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return record(y, (x,), bw, "softmax")


def log_softmax(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(y)
    return record(y, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),), "log_softmax")


def segment_softmax(x: ArrayLike, lengths: Sequence[int]) -> Tensor:
    """Softmax applied independently to consecutive segments of the last axis."""
    x = as_tensor(x)
    lengths = [int(n) for n in lengths]
    if any(n <= 0 for n in lengths) or np.sum(lengths) != x.shape[-1]:
        raise DimensionError(f"segment_softmax: lengths {lengths} do not tile axis of size {x.shape[-1]}")
    bounds = np.cumsum([0] + lengths)
    y = np.empty_like(x.data)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        z = x.data[..., lo:hi]
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y[..., lo:hi] = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        out = np.empty_like(g)
        gy = g * y
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            out[..., lo:hi] = y[..., lo:hi] * (g[..., lo:hi] - gy[..., lo:hi].sum(axis=-1, keepdims=True))
        return (out,)

    return record(y, (x,), bw, "segment_softmax")


def sparsemax_array(z: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``z`` (last axis) onto the probability simplex.

    Uses the sort-and-threshold rule: with z sorted descending and cumulative
    sums S_k, the support size is the largest k with 1 + k z_(k) > S_k, and
    tau = (S_k - 1) / k.  Entries equal to -inf always receive zero.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] == 0:
        raise ValueError("sparsemax: empty input")
    z = z - z.max(axis=-1, keepdims=True)
    zs = -np.sort(-z, axis=-1)
    n = z.shape[-1]
    k = np.arange(1, n + 1, dtype=np.float64)
    finite = np.where(np.isfinite(zs), zs, 0.0)
    cums = np.cumsum(finite, axis=-1)
    cond = np.isfinite(zs) & (1.0 + k * finite > cums)
    support = n - np.argmax(cond[..., ::-1], axis=-1)
    kz = np.take_along_axis(cums, (support - 1)[..., None], axis=-1)
    tau = (kz - 1.0) / support[..., None]
    return np.maximum(z - tau, 0.0)


def sparsemax(x: ArrayLike, mask: Optional[np.ndarray] = None) -> Tensor:
    """Sparsemax over the last axis; gradient uses (I - 1 1^T/|S|) on the support S."""
    x = as_tensor(x)
    y = sparsemax_array(_masked(x.data, mask))
    supp = (y > 0).astype(np.float64)

    def bw(g):
        gs = g * supp
        m = gs.sum(axis=-1, keepdims=True) / supp.sum(axis=-1, keepdims=True)
        return (supp * (g - m),)

    return record(y, (x,), bw, "sparsemax")


def layer_norm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, eps: float = 1e-9) -> Tensor:
    """Normalise each row of ``x`` to zero mean / unit variance, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} vs width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    lead = tuple(range(x.ndim - 1))

    def bw(g):
        gx = g * gd
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return record(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def nll(logits: ArrayLike, targets: Sequence[int]) -> Tensor:
    """Summed negative log-likelihood of ``targets`` under row-wise softmax of ``logits``."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionError(f"nll: logits {logits.shape} vs targets {targets.shape}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    rows = np.arange(len(targets))
    loss = np.sum(lse - z[rows, targets])

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[rows, targets] -= 1.0
        return (p * g,)

    return record(np.asarray(loss), (logits,), bw, "nll")
