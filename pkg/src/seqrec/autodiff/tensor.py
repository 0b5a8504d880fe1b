"""Dense float64 tensors with a reverse-mode tape.

Primitives record themselves on the innermost active :class:`Tape` when any
input requires a gradient.  Backward walks the tape once, in reverse.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "Tape", "NonFiniteError", "TapeError", "backward", "apply_primitive",
    "PRIMITIVES", "as_tensor",
    "matmul", "add", "sub", "mul", "neg", "concat", "stack", "slice_", "reshape",
    "embedding_gather", "sigmoid", "tanh", "relu", "softmax", "log_softmax",
    "log_sigmoid", "dropout", "layer_norm", "masked_fill", "transpose", "sum_",
    "mean", "pick", "gru_step",
]

_ACTIVE: list["Tape"] = []


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


class TapeError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_ufunc__ = None  # make numpy defer to Tensor's reflected operators

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications.

    Used as a context manager; every primitive evaluated inside the ``with``
    block whose inputs require gradients is appended in execution order,
    which is already a topological order.
    """

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.remove(self)
        return False

    def __len__(self):
        return len(self.nodes)


class _Scatter:
    """Gradient that touches only ``index`` of an input of ``shape``."""

    __slots__ = ("index", "value", "shape", "accumulate")

    def __init__(self, index, value, shape, accumulate=False):
        self.index = index
        self.value = value
        self.shape = shape
        self.accumulate = accumulate  # repeated indices -> np.add.at

    def add_into(self, buf):
        if self.accumulate:
            np.add.at(buf, self.index, self.value)
        else:
            buf[self.index] += self.value


def _emit(data, inputs, vjp):
    # a NaN/Inf anywhere makes the sum non-finite; confirm exactly only then
    if not np.isfinite(data.sum()) and not np.all(np.isfinite(data)):
        raise NonFiniteError("non-finite value produced by primitive")
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires and _ACTIVE:
        _ACTIVE[-1].nodes.append((out, inputs, vjp))
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- primitives -------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    if b.ndim == 1:
        raise ValueError("matmul expects a matrix right operand")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        if a.ndim == 1:
            gb = np.outer(a.data, g)
        elif b.ndim == 2:
            # fold batch dimensions into one GEMM instead of a batched product + sum
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit(a.data @ b.data, (a, b), vjp)


def _check_broadcast(a, b, op):
    if a.data.shape == b.data.shape or b.data.ndim == 0 or a.data.ndim == 0:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op} shape mismatch: {a.shape} vs {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _emit(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def neg(a):
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(data, tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _emit(data, tuple(tensors), vjp)


def slice_(a, index):
    a = as_tensor(a)
    return _emit(a.data[index], (a,),
                 lambda g: (_Scatter(index, g, a.shape),))


def reshape(a, shape):
    a = as_tensor(a)
    return _emit(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def embedding_gather(table, ids):
    """Rows of ``table`` at integer ``ids`` (any shape)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError("embedding id out of range")
    return _emit(table.data[ids], (table,),
                 lambda g: (_Scatter(ids, g, table.shape, accumulate=True),))


def _sigmoid(x):
    # overflow-free form of 1 / (1 + exp(-x))
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a):
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return _emit(s, (a,), lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a):
    a = as_tensor(a)
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return _emit(out, (a,), lambda g: (g * _sigmoid(-x),))


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)
    return _emit(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a):
    a = as_tensor(a)
    on = a.data > 0
    return _emit(np.where(on, a.data, 0.0), (a,), lambda g: (g * on,))


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _emit(s, (a,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _emit(out, (a,), vjp)


def dropout(a, p, train, rng=None):
    """Inverted dropout; identity when not training or ``p == 0``."""
    a = as_tensor(a)
    if not train or p == 0:
        return a
    if not 0 <= p < 1:
        raise ValueError("dropout probability must lie in [0, 1)")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return _emit(a.data * keep, (a,), lambda g: (g * keep,))


def layer_norm(a, eps=1e-5):
    """Normalize over the last axis; no affine part."""
    a = as_tensor(a)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _emit(y, (a,), vjp)


def masked_fill(a, mask, value):
    """Replace entries where ``mask`` is true by the constant ``value``."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return _emit(np.where(mask, value, a.data), (a,), lambda g: (np.where(mask, 0.0, g),))


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)
    return _emit(np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inverse),))


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _emit(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape),)

    return _emit(a.data.mean(axis=axis, keepdims=keepdims), (a,), vjp)


def pick(a, idx):
    """``a[..., idx]`` elementwise along the last axis (a gather of one column per row)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != a.shape[:-1]:
        raise ValueError(f"pick index shape {idx.shape} does not match {a.shape[:-1]}")
    lead = np.indices(idx.shape, sparse=True)
    index = (*lead, idx)
    return _emit(a.data[index], (a,), lambda g: (_Scatter(index, g, a.shape),))


def gru_step(xw, h, U, carry=None):
    """Fused GRU update from precomputed input projections ``xw = x W + b``.

    Columns of ``xw`` and ``U`` are ordered (update, reset, candidate).
    ``carry`` (B, 1) in {0, 1}: rows with 0 keep ``h`` unchanged.
    """
    xw, h, U = as_tensor(xw), as_tensor(h), as_tensor(U)
    d = U.shape[0]
    if h.shape[-1] != d or xw.shape[-1] != 3 * d or U.shape[1] != 3 * d:
        raise ValueError(f"gru shape mismatch: xw {xw.shape}, h {h.shape}, U {U.shape}")
    hd, Ud = h.data, U.data
    hu = hd @ Ud
    z = _sigmoid(xw.data[..., :d] + hu[..., :d])
    r = _sigmoid(xw.data[..., d:2 * d] + hu[..., d:2 * d])
    un = hu[..., 2 * d:]
    n = np.tanh(xw.data[..., 2 * d:] + r * un)
    h_new = n + z * (hd - n)
    out = h_new if carry is None else hd + carry * (h_new - hd)

    def vjp(g):
        g_new = g if carry is None else g * carry
        dz = g_new * (hd - n) * z * (1.0 - z)
        dn = g_new * (1.0 - z) * (1.0 - n * n)
        dr = dn * un * r * (1.0 - r)
        d_xw = np.concatenate([dz, dr, dn], axis=-1)
        d_hu = np.concatenate([dz, dr, dn * r], axis=-1)
        dh = g_new * z + d_hu @ Ud.T
        if carry is not None:
            dh += g * (1.0 - carry)
        dU = hd.reshape(-1, d).T @ d_hu.reshape(-1, 3 * d)
        return d_xw, dh, dU

    return _emit(out, (xw, h, U), vjp)


PRIMITIVES = {
    "matmul": matmul, "add": add, "sub": sub, "mul": mul, "neg": neg,
    "concat": concat, "stack": stack, "slice": slice_, "reshape": reshape,
    "embedding_gather": embedding_gather, "sigmoid": sigmoid, "tanh": tanh,
    "relu": relu, "softmax": softmax, "log_softmax": log_softmax,
    "log_sigmoid": log_sigmoid, "dropout": dropout, "layer_norm": layer_norm,
    "masked_fill": masked_fill, "transpose": transpose, "sum": sum_,
    "mean": mean, "pick": pick, "gru_step": gru_step,
}


def apply_primitive(op, *inputs, **attrs):
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **attrs)


# -- backward ---------------------------------------------------------------

def backward(tape, loss, params):
    """Reverse-mode pass over ``tape`` from scalar ``loss``.

    ``params`` maps names to leaf tensors.  Returns a dict of gradient arrays
    with the same keys (zeros for parameters the loss does not depend on) and
    stores each on ``tensor.grad``.
    """
    if loss.data.size != 1:
        raise TapeError("loss must be a scalar")
    if tape.consumed:
        raise TapeError("tape already consumed")
    tape.consumed = True

    grads = {id(loss): np.ones_like(loss.data)}
    owned = set()

    def accumulate(t, g):
        key = id(t)
        cur = grads.get(key)
        if isinstance(g, _Scatter):
            if cur is None:
                cur = np.zeros(g.shape)
                grads[key] = cur
                owned.add(key)
            elif key not in owned:
                cur = np.array(cur, dtype=np.float64)
                grads[key] = cur
                owned.add(key)
            g.add_into(cur)
            return
        if cur is None:
            grads[key] = g
        elif key in owned:
            cur += g
        else:
            grads[key] = cur + g
            owned.add(key)

    for out, inputs, vjp in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, vjp(g)):
            if t.requires_grad and gi is not None:
                accumulate(t, gi)

    result = {}
    for name, p in params.items():
        g = grads.get(id(p))
        g = np.zeros_like(p.data) if g is None else np.array(g, dtype=np.float64).reshape(p.shape)
        p.grad = g
        result[name] = g
    return result
