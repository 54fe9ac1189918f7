"""Reverse-mode automatic differentiation over dense numpy tensors.

A tape is built implicitly: every op that touches a gradient-requiring
tensor records a backward closure on the produced node.  ``backward`` on a
scalar loss walks the tape in reverse topological order and accumulates
gradients into the leaves.

Precision is controlled by a module-level default dtype: float32 for
training speed, float64 inside gradient-check tests (``precision`` context
manager).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractViolation, NumericFault

_DEFAULT_DTYPE = np.float32
_GRAD_ENABLED = True
_NAN_GUARD = False


def default_dtype():
    return _DEFAULT_DTYPE


def set_default_dtype(dtype):
    global _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type


@contextmanager
def precision(dtype):
    """Temporarily switch the default dtype (e.g. to float64 for grad checks)."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


@contextmanager
def no_grad():
    """Disable tape recording; ops run as plain numpy."""
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


@contextmanager
def nan_guard(enabled=True):
    """Check every op output for non-finite values (slow; debugging only)."""
    global _NAN_GUARD
    old = _NAN_GUARD
    _NAN_GUARD = enabled
    try:
        yield
    finally:
        _NAN_GUARD = old


def _asarray(x):
    a = np.asarray(x)
    if a.dtype != _DEFAULT_DTYPE:
        a = a.astype(_DEFAULT_DTYPE)
    return a


class Tensor:
    """A node in the computation graph wrapping a dense numpy array."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd", "name")

    # make ndarray <op> Tensor defer to the reflected Tensor methods
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._bwd = None
        self.name = name

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

    # -- operator sugar -------------------------------------------------
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

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 else shape[0])

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, bwd, op_name):
    """Record a node on the tape if gradients are enabled and needed."""
    if _NAN_GUARD and not np.all(np.isfinite(data)):
        raise NumericFault(f"non-finite output in op '{op_name}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._bwd = bwd
    else:
        out.requires_grad = False
        out._parents = ()
        out._bwd = None
    return out


def _accum(t, g):
    if t.requires_grad:
        if t.grad is None:
            t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            t.grad += g


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(data, (a, b), bwd, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * data / b.data, b.data.shape))

    return _make(data, (a, b), bwd, "div")


def power(a, p):
    a = as_tensor(a)
    data = a.data ** p

    def bwd(g):
        _accum(a, g * p * a.data ** (p - 1))

    return _make(data, (a,), bwd, "power")


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def bwd(g):
        _accum(a, g * data)

    return _make(data, (a,), bwd, "exp")


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def bwd(g):
        _accum(a, g / a.data)

    return _make(data, (a,), bwd, "log")


def sqrt(a):
    return power(a, 0.5)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), bwd, "tanh")


def sigmoid(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), bwd, "sigmoid")


def leaky_relu(a, slope=0.1):
    a = as_tensor(a)
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data)

    def bwd(g):
        _accum(a, np.where(mask, g, slope * g))

    return _make(data, (a,), bwd, "leaky_relu")


def clip_min(a, floor):
    """max(a, floor) elementwise against a constant; gradient is 0 where clipped."""
    a = as_tensor(a)
    mask = a.data > floor
    data = np.where(mask, a.data, floor)

    def bwd(g):
        _accum(a, np.where(mask, g, 0.0))

    return _make(data, (a,), bwd, "clip_min")


# -- reductions and shape ops -------------------------------------------


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(gg, a.data.shape).copy())

    return _make(data, (a,), bwd, "sum")


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return tsum(a, axis, keepdims) * (1.0 / n)


def tmax(a, axis, keepdims=False):
    """Max along an axis; gradient routed to the (first) argmax entries."""
    a = as_tensor(a)
    data = a.data.max(axis=axis, keepdims=keepdims)
    idx = np.expand_dims(a.data.argmax(axis=axis), axis)

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        ga = np.zeros_like(a.data)
        np.put_along_axis(ga, idx, gg, axis)
        _accum(a, ga)

    return _make(data, (a,), bwd, "max")


def tmin(a, axis, keepdims=False):
    return -tmax(-as_tensor(a), axis, keepdims)


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _make(data, (a,), bwd, "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    data = a.data.transpose(axes)

    def bwd(g):
        if axes is None:
            _accum(a, g.transpose())
        else:
            _accum(a, g.transpose(np.argsort(axes)))

    return _make(data, (a,), bwd, "transpose")


def concat(parts, axis=0):
    parts = [as_tensor(p) for p in parts]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for p, gp in zip(parts, np.split(g, splits, axis=axis)):
            _accum(p, gp)

    return _make(data, tuple(parts), bwd, "concat")


def take(a, key):
    """General indexing; fancy indices scatter-add on the way back."""
    a = as_tensor(a)
    data = a.data[key]
    fancy = isinstance(key, (np.ndarray, list)) or (
        isinstance(key, tuple) and any(isinstance(k, (np.ndarray, list)) for k in key)
    )

    def bwd(g):
        ga = np.zeros_like(a.data)
        if fancy:
            np.add.at(ga, key, g)
        else:
            ga[key] += g
        _accum(a, ga)

    return _make(data, (a,), bwd, "take")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractViolation("matmul expects 2-D operands")
    data = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(data, (a, b), bwd, "matmul")


# -- composites ----------------------------------------------------------


def softmax(a, axis=-1):
    """Shift-stabilized softmax; strictly positive, rows sum to 1."""
    a = as_tensor(a)
    shift = a.data.max(axis=axis, keepdims=True)
    e = exp(a - shift)
    return e / tsum(e, axis=axis, keepdims=True)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    shift = a.data.max(axis=axis, keepdims=True)
    z = a - shift
    return z - log(tsum(exp(z), axis=axis, keepdims=True))


def conv2d(x, w, b, stride=1, padding=0):
    """2-D convolution, NCHW layout, square kernel; im2col under the hood."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    B, C, H, W = x.data.shape
    F, C2, kh, kw = w.data.shape
    if C != C2:
        raise ContractViolation("conv2d channel mismatch")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    Hp, Wp = xp.shape[2], xp.shape[3]
    oh = (Hp - kh) // stride + 1
    ow = (Wp - kw) // stride + 1
    s = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(B, C, oh, ow, kh, kw),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[2], s[3]),
    )
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(B * oh * ow, C * kh * kw)
    wf = w.data.reshape(F, -1)
    out = (cols @ wf.T + b.data).reshape(B, oh, ow, F).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)

    def bwd(g):
        gf = g.transpose(0, 2, 3, 1).reshape(B * oh * ow, F)
        _accum(w, (gf.T @ cols).reshape(w.data.shape))
        _accum(b, gf.sum(axis=0))
        if x.requires_grad:
            gcols = (gf @ wf).reshape(B, oh, ow, C, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + oh * stride : stride, j : j + ow * stride : stride] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            _accum(x, gxp)

    return _make(out, (x, w, b), bwd, "conv2d")


# -- backward ------------------------------------------------------------


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    ``loss`` must be scalar.  Leaves the tape intact; call at most once per
    freshly built graph (gradients accumulate otherwise).
    """
    if loss.data.size != 1:
        raise ContractViolation("backward requires a scalar loss")
    if not np.all(np.isfinite(loss.data)):
        raise NumericFault("non-finite loss at backward entry")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
