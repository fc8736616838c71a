"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op returns a new :class:`Tensor`. When any operand requires grad the
result remembers its parents and a closure that pushes the upstream gradient
back to them; :meth:`Tensor.backward` walks that graph in reverse topological
order. Gradients accumulate across calls until :meth:`Tensor.zero_grad`.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes do not conform for an op."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " vs ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class DomainError(ValueError):
    """Input outside the mathematical domain of an op."""


def _as_array(x):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=DTYPE)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(DTYPE, copy=False)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    # -- basic properties --------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # -- graph plumbing ----------------------------------------------------
    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs)
        if needs:
            out._parents = parents
            out._backward = backward
        return out

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Populate ``.grad`` on every reachable tensor that requires grad.

        Only scalar outputs may be differentiated without an explicit seed.
        Repeated calls accumulate.
        """
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward (loss must be scalar)", self.shape)
            grad = np.ones_like(self.data)
        if not self.requires_grad:
            return

        order, seen = [], set()
        stack = [(self, False)]
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

        # upstream grads for interior nodes live here; leaves keep theirs on .grad
        pending = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # -- operator sugar ----------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

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


def tensor(data, requires_grad=False, name=None):
    return Tensor(np.asarray(data, dtype=DTYPE), requires_grad=requires_grad, name=name)


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- elementwise binary -------------------------------------------------------
def add(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("add", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.data + b.data, (a, b), back)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("sub", a, b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._make(a.data - b.data, (a, b), back)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("mul", a, b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), back)


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    _broadcast_shape("div", a, b)

    def back(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor._make(a.data / b.data, (a, b), back)


def matmul(a, b):
    """``np.matmul`` semantics for operands with ndim >= 2 (batch dims broadcast)."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._make(out, (a, b), back)


# -- elementwise unary --------------------------------------------------------
def relu(x):
    x = _wrap(x)
    on = x.data > 0
    return Tensor._make(np.where(on, x.data, 0.0), (x,), lambda g: (g * on,))


def _stable_sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    x = _wrap(x)
    s = _stable_sigmoid(x.data)
    return Tensor._make(s, (x,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(x):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = _wrap(x)
    z = x.data
    out = np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))
    return Tensor._make(out, (x,), lambda g: (g * _stable_sigmoid(-z),))


def exp(x):
    x = _wrap(x)
    e = np.exp(x.data)
    return Tensor._make(e, (x,), lambda g: (g * e,))


def log(x):
    x = _wrap(x)
    if np.any(x.data <= 0):
        raise DomainError(f"log: non-positive input (min {x.data.min():.3g})")
    return Tensor._make(np.log(x.data), (x,), lambda g: (g / x.data,))


def cos(x):
    x = _wrap(x)
    return Tensor._make(np.cos(x.data), (x,), lambda g: (-g * np.sin(x.data),))


def clip(x, lo, hi):
    x = _wrap(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor._make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


# -- reductions and shape -----------------------------------------------------
def tsum(x, axis=None, keepdims=False):
    x = _wrap(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._make(out, (x,), back)


def mean(x, axis=None, keepdims=False):
    x = _wrap(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape):
    x = _wrap(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    return Tensor._make(out, (x,), lambda g: (g.reshape(x.shape),))


def getitem(x, idx):
    """Basic or integer-array indexing; backward scatters with ``np.add.at``."""
    x = _wrap(x)
    out = x.data[idx]

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._make(np.array(out, copy=True), (x,), back)


def take_rows(x, index):
    """Gather rows of a 2-D tensor: ``x[index]`` with ``index`` any int array."""
    index = np.asarray(index, dtype=np.intp)
    return getitem(x, index)


def concat(tensors, axis=-1):
    tensors = [_wrap(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    ax = axis if axis >= 0 else out.ndim + axis
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def back(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            parts.append(g[tuple(sl)])
        return tuple(parts)

    return Tensor._make(out, tensors, back)


def broadcast_to(x, shape):
    x = _wrap(x)
    try:
        out = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", x.shape, shape) from None
    return Tensor._make(out, (x,), lambda g: (_unbroadcast(g, x.shape),))


def softmax(x, axis=-1, mask=None):
    """Softmax along ``axis``. Entries where ``mask`` is False get weight 0;
    a slice that is fully masked yields all zeros."""
    x = _wrap(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.exp(z - zmax)
    denom = e.sum(axis=axis, keepdims=True)
    s = e / np.where(denom > 0, denom, 1.0)

    def back(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor._make(s, (x,), back)


def dropout(x, rate, noise=None, training=True):
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time."""
    x = _wrap(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if noise is None:
        raise ValueError("dropout in training mode needs a noise source")
    keep = (noise.uniform(x.shape) >= rate) / (1.0 - rate)
    return mul(x, keep)


def straight_through(hard, soft):
    """Forward value of ``hard`` with the gradient of ``soft``."""
    soft = _wrap(soft)
    hard = np.asarray(hard, dtype=DTYPE)
    if hard.shape != soft.shape:
        raise ShapeError("straight_through", hard.shape, soft.shape)
    return Tensor._make(hard.copy(), (soft,), lambda g: (g,))
