"""Dense tensors with reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array.  Every differentiable operation
records its parents and a closure that pushes the output gradient back to
them; :meth:`Tensor.backward` walks the recorded graph in reverse
topological order.  Gradients are accumulated into ``.grad`` of leaf
tensors created with ``requires_grad=True``.

Training runs in float32.  ``default_dtype(np.float64)`` switches newly
created tensors to double precision for gradient checking.
"""

import contextlib
from typing import Optional, Sequence

import numpy as np

from ..errors import BadTarget, DisconnectedGraph, NonFinite, ShapeMismatch

_state = {"grad": True, "dtype": np.float32, "check_finite": True}


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


@contextlib.contextmanager
def default_dtype(dtype):
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


def get_default_dtype():
    return _state["dtype"]


def set_check_finite(flag: bool) -> None:
    """Toggle the per-op NaN/Inf guard (on by default)."""
    _state["check_finite"] = bool(flag)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_g", "_g_owned")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else _state["dtype"]
        self.data = np.asarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None
        self._g = None
        self._g_owned = False

    # basic protocol -----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # operators ----------------------------------------------------------
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
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    # autodiff -----------------------------------------------------------
    def backward(self, grad=None):
        """Back-propagate from this tensor; it must be a scalar unless ``grad`` is given."""
        if not self.requires_grad:
            raise DisconnectedGraph("tensor does not depend on any parameter requiring grad")
        if grad is None:
            if self.size != 1:
                raise ShapeMismatch(f"backward() without grad needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        self._g = np.asarray(grad, dtype=self.dtype).reshape(self.shape)
        self._g_owned = False
        for node in reversed(order):
            g = node._g
            if node._backward is not None:
                if g is not None:
                    node._backward(g)
                node._g = None
                node._parents = ()
                node._backward = None
            elif g is not None:
                node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
                node._g = None


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def _accum(t: Tensor, g, idx=None):
    """Add ``g`` into the pending gradient of ``t`` (into ``t[idx]`` if given)."""
    if not t.requires_grad:
        return
    if idx is None:
        if g.shape != t.shape:
            g = _unbroadcast(g, t.shape)
        if t._g is None:
            t._g, t._g_owned = g, False
        elif t._g_owned:
            t._g += g
        else:
            t._g, t._g_owned = t._g + g, True
        return
    if t._g is None:
        t._g, t._g_owned = np.zeros(t.shape, dtype=t.dtype), True
    elif not t._g_owned:
        t._g, t._g_owned = np.array(t._g, copy=True), True
    t._g[idx] += g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _pair(a, b):
    """Tensors for a binary op; a bare Python/numpy scalar takes the other operand's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.ndim(b) == 0:
        return a, Tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.ndim(a) == 0:
        return Tensor(a, dtype=b.dtype), b
    return as_tensor(a), as_tensor(b)


def _result(data, parents, backward) -> Tensor:
    if _state["check_finite"] and data.dtype.kind == "f" and not np.isfinite(data).all():
        raise NonFinite(f"non-finite values produced (shape {data.shape})")
    out = Tensor(data, dtype=data.dtype)
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise arithmetic ---------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")

    def backward(g):
        if a.requires_grad:
            _accum(a, g / b.data)
        if b.requires_grad:
            _accum(b, -g * a.data / (b.data * b.data))

    return _result(a.data / b.data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: _accum(a, -g))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = a.data ** exponent

    def backward(g):
        _accum(a, g * exponent * a.data ** (exponent - 1))

    return _result(out, (a,), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: _accum(a, g * out))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), (a,), lambda g: _accum(a, g / a.data))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: _accum(a, g * 0.5 / out))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: _accum(a, g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # split by sign so exp never overflows
    x = a.data
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.dtype, copy=False)
    return _result(out, (a,), lambda g: _accum(a, g * out * (1.0 - out)))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(a.data * mask, (a,), lambda g: _accum(a, g * mask))


# reductions and shape ops -----------------------------------------------
def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _result(np.asarray(out), (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return tsum(a, axis, keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}") from None
    return _result(out, (a,), lambda g: _accum(a, g.reshape(a.shape)))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    out = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)
    return _result(out, (a,), lambda g: _accum(a, np.transpose(g, inv)))


def swapaxes(a, ax1, ax2) -> Tensor:
    axes = list(range(as_tensor(a).ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out = a.data[idx]
    basic = _is_basic_index(idx)

    def backward(g):
        if basic:
            _accum(a, g, idx)
        else:
            full = np.zeros(a.shape, dtype=a.dtype)
            np.add.at(full, idx, g)
            _accum(a, full)

    return _result(np.array(out, copy=basic) if basic else out, (a,), backward)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat: {exc}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _result(out, tensors, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"stack: {exc}") from None

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accum(t, np.take(g, i, axis=axis))

    return _result(out, tensors, backward)


# linear algebra -----------------------------------------------------------
def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy broadcasting over leading (batch) dimensions."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        if a.requires_grad:
            _accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                # fold batch dims: (N, k)^T @ (N, m)
                _accum(b, a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
            else:
                _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _result(out, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# probability ----------------------------------------------------------------
def softmax(logits, axis: int = -1) -> Tensor:
    x = as_tensor(logits)
    if not np.isfinite(x.data).all():
        raise NonFinite("softmax received non-finite logits")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accum(x, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _result(out, (x,), backward)


def masked_softmax(logits, mask, axis: int = -1) -> Tensor:
    """Softmax where entries with ``mask == False`` get probability exactly 0.

    Equivalent to setting masked logits to -inf; every row needs at least one
    unmasked entry.
    """
    x = as_tensor(logits)
    if not np.isfinite(x.data).all():
        raise NonFinite("softmax received non-finite logits")
    mask = np.asarray(mask, dtype=bool)
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = (e / e.sum(axis=axis, keepdims=True)).astype(x.dtype, copy=False)

    def backward(g):
        _accum(x, out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _result(out, (x,), backward)


def log_softmax(logits, axis: int = -1) -> Tensor:
    x = as_tensor(logits)
    if not np.isfinite(x.data).all():
        raise NonFinite("log_softmax received non-finite logits")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def backward(g):
        _accum(x, g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _result(out, (x,), backward)


def sparse_ce_loss(logits, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``softmax(logits)``.

    Fused log-softmax; ``logits`` is ``(batch, classes)``.
    """
    x = as_tensor(logits)
    targets = np.asarray(targets)
    if x.ndim != 2 or targets.shape != (x.shape[0],):
        raise ShapeMismatch(f"sparse_ce_loss: logits {x.shape}, targets {targets.shape}")
    if targets.dtype.kind not in "iu" or targets.min(initial=0) < 0 or targets.max(initial=0) >= x.shape[1]:
        raise BadTarget(f"targets must be class indices in [0, {x.shape[1]})")
    if not np.isfinite(x.data).all():
        raise NonFinite("loss received non-finite logits")
    n = x.shape[0]
    z = x.data - x.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = -logp[rows, targets].mean()

    def backward(g):
        d = np.exp(logp)
        d[rows, targets] -= 1.0
        _accum(x, d * (g / n))

    return _result(np.asarray(loss, dtype=x.dtype), (x,), backward)


def nll_from_probs(probs, targets) -> Tensor:
    """Mean ``-log p[target]`` for already-normalized probabilities."""
    p = as_tensor(probs)
    targets = np.asarray(targets)
    if targets.min(initial=0) < 0 or targets.max(initial=0) >= p.shape[1]:
        raise BadTarget(f"targets must be class indices in [0, {p.shape[1]})")
    picked = getitem(p, (np.arange(p.shape[0]), targets))
    return neg(mean(log(picked)))


# lookups and constants ------------------------------------------------------
def one_hot(indices, depth: int, dtype=None) -> Tensor:
    idx = np.asarray(indices)
    out = np.zeros(idx.shape + (depth,), dtype=dtype or _state["dtype"])
    valid = idx >= 0
    out[valid, idx[valid]] = 1.0
    return Tensor(out)


def embedding_lookup(weight, indices) -> Tensor:
    """Rows of ``weight`` selected by integer ``indices`` (any shape)."""
    w = as_tensor(weight)
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise ShapeMismatch("embedding indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= w.shape[0]):
        raise BadTarget(f"embedding index out of range [0, {w.shape[0]})")
    out = w.data[idx]

    def backward(g):
        full = np.zeros(w.shape, dtype=w.dtype)
        np.add.at(full, idx.reshape(-1), g.reshape(-1, w.shape[1]))
        _accum(w, full)

    return _result(out, (w,), backward)


def dropout(x, rate: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``rate == 0``."""
    if not train or rate <= 0:
        return as_tensor(x)
    x = as_tensor(x)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep, dtype=x.dtype))
