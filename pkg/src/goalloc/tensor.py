"""Dense float64 tensors with a reverse-mode tape.

Every differentiable primitive records one entry on the active :class:`Tape`
when any of its inputs requires a gradient.  :func:`backward` replays the tape
in reverse, visiting each entry once, and accumulates gradients additively
into every tensor that requires one.

Tapes are thread-local: each thread has its own stack, so independent videos
can be processed concurrently as long as each uses its own tape.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not a supported primitive")
        return scale(self, 1.0 / float(other))

    def __getitem__(self, key):
        return index(self, key)


def _not_scalar(t: Tensor):
    raise ValueError(f"item(): tensor of shape {t.shape} is not a scalar")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Entry:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager to make it the active tape for the current
    thread; otherwise a per-thread default tape is used.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def clear(self) -> None:
        self.entries.clear()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()


_local = threading.local()


def _stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = [Tape()]
        _local.grad_enabled = True
    return stack


def current_tape() -> Tape:
    return _stack()[-1]


def grad_enabled() -> bool:
    try:
        return _local.grad_enabled
    except AttributeError:
        _stack()
        return True


@contextmanager
def no_grad():
    """Evaluate primitives without recording anything."""
    _stack()
    prev = _local.grad_enabled
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


def record(name: str, out: np.ndarray, inputs: Sequence[Tensor],
           backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap ``out`` in a Tensor and put it on the tape if gradients are needed.

    ``backward`` maps the output gradient to one gradient (or None) per input.
    """
    if grad_enabled() and any(t.requires_grad for t in inputs):
        result = Tensor(out, requires_grad=True)
        tape = current_tape()
        tape.entries.append(_Entry(name, tuple(inputs), result, backward))
        result._tape = tape
        return result
    return Tensor(out)


def backward(loss: Tensor, retain_tape: bool = False) -> None:
    """Populate ``.grad`` on every tensor that requires it and fed into ``loss``.

    The tape that recorded ``loss`` is cleared afterwards unless
    ``retain_tape`` is set.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tape = loss._tape
    if tape is None or not tape.entries:
        raise ValueError("backward: loss was not recorded on any tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    seen: dict[int, Tensor] = {}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        entry.output.grad = g if entry.output.grad is None else entry.output.grad + g
        for inp, gi in zip(entry.inputs, entry.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            seen[key] = inp
            prev = grads.get(key)
            grads[key] = gi if prev is None else prev + gi
    # whatever is left was never produced on this tape: leaves
    for key, g in grads.items():
        t = seen.get(key)
        if t is None:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
    if not retain_tape:
        tape.clear()


# ---------------------------------------------------------------- helpers

def _binary(name: str, fn, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return fn(a, b)
    except ValueError:
        raise ShapeError(f"{name}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _norm_axis(axis: int, ndim: int, name: str) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"{name}: axis {axis} out of range for {ndim}-d input")
    return axis % ndim


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("add", np.add, a.data, b.data)
    sa, sb = a.shape, b.shape
    return record("add", out, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = _binary("sub", np.subtract, a.data, b.data)
    sa, sb = a.shape, b.shape
    return record("sub", out, (a, b),
                  lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    da, db = a.data, b.data
    out = _binary("mul", np.multiply, da, db)
    return record("mul", out, (a, b),
                  lambda g: (_unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)))


def neg(x) -> Tensor:
    x = as_tensor(x)
    return record("neg", -x.data, (x,), lambda g: (-g,))


def scale(x, c: float) -> Tensor:
    """Multiply by a constant scalar."""
    x = as_tensor(x)
    c = float(c)
    return record("scale", x.data * c, (x,), lambda g: (g * c,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # exp(-log(1 + e^-x)) never overflows
    out = np.exp(-np.logaddexp(0.0, -x.data))
    return record("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return record("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return record("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    d = x.data
    return record("log", np.log(d), (x,), lambda g: (g / d,))


def maximum(x, c: float) -> Tensor:
    """Elementwise max with a constant; the gradient goes to entries strictly above it."""
    x = as_tensor(x)
    mask = x.data > c
    return record("maximum", np.where(mask, x.data, float(c)), (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    da, db = a.data, b.data

    def _back(g):
        if db.ndim == 1:
            return np.outer(g, db), da.T @ g
        return g @ db.T, da.T @ g

    return record("matmul", da @ db, (a, b), _back)


def transpose(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-d tensor, got shape {x.shape}")
    return record("transpose", x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} into {tuple(shape)}") from None
    return record("reshape", out, (x,), lambda g: (g.reshape(old),))


# ---------------------------------------------------------------- reductions

def sum(x, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    shape = x.shape
    if axis is None:
        return record("sum", np.asarray(x.data.sum()), (x,),
                      lambda g: (np.broadcast_to(g, shape).copy(),))
    axis = _norm_axis(axis, x.ndim, "sum")
    return record("sum", x.data.sum(axis=axis), (x,),
                  lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if x.size == 0:
        raise ShapeError("mean: empty input")
    shape = x.shape
    if axis is None:
        n = x.size
        return record("mean", np.asarray(x.data.sum() / n), (x,),
                      lambda g: (np.full(shape, g / n),))
    axis = _norm_axis(axis, x.ndim, "mean")
    n = shape[axis]
    return record("mean", x.data.sum(axis=axis) / n, (x,),
                  lambda g: (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),))


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim, "softmax")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def _back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record("softmax", out, (x,), _back)


def logsumexp(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim, "logsumexp")
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (np.log(s) + m).squeeze(axis)
    p = e / s
    return record("logsumexp", out, (x,), lambda g: (np.expand_dims(g, axis) * p,))


def topk_indices(values: np.ndarray, k: int, axis: int = 0) -> np.ndarray:
    """Indices of the ``k`` largest entries along ``axis``; ties go to the lower index."""
    order = np.argsort(-values, axis=axis, kind="stable")
    return np.take(order, np.arange(k), axis=axis)


def topk_mean(x, k: int, axis: int = 0) -> Tensor:
    """Mean of the ``k`` largest entries along ``axis``.

    The gradient is ``1/k`` on the selected entries and zero elsewhere.
    """
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim, "topk_mean")
    n = x.shape[axis]
    if n == 0:
        raise ShapeError(f"topk_mean: empty axis {axis} in shape {x.shape}")
    if not 1 <= k <= n:
        raise ShapeError(f"topk_mean: k={k} outside [1, {n}] for shape {x.shape}")
    data = x.data if axis == 0 else np.moveaxis(x.data, axis, 0)
    idx = np.argsort(-data, axis=0, kind="stable")[:k]
    if data.ndim == 1:
        key = (idx,)
    elif data.ndim == 2:
        key = (idx, np.arange(data.shape[1]))
    else:
        key = (idx, *np.indices(idx.shape[1:], sparse=True))
    out = data[key].sum(axis=0) / k
    shape = data.shape

    def _back(g):
        gx = np.zeros(shape)
        gx[key] = g / k
        return (gx if axis == 0 else np.moveaxis(gx, 0, axis),)

    return record("topk_mean", out, (x,), _back)


# ---------------------------------------------------------------- structure

def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    axis = _norm_axis(axis, tensors[0].ndim, "concat")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(ref, t.shape)) if i != axis):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return record("concat", out, tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def index(x, key) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate in backward."""
    x = as_tensor(x)
    try:
        out = x.data[key]
    except IndexError as err:
        raise ShapeError(f"index: {err} for shape {x.shape}") from None
    shape = x.shape

    def _back(g):
        gx = np.zeros(shape)
        np.add.at(gx, key, g)
        return (gx,)

    return record("index", np.array(out, dtype=np.float64), (x,), _back)


def take(x, indices, axis: int = 0) -> Tensor:
    """Gather entries along ``axis`` by an integer index array."""
    x = as_tensor(x)
    axis = _norm_axis(axis, x.ndim, "take")
    indices = np.asarray(indices, dtype=np.intp)
    key = (slice(None),) * axis + (indices,)
    return index(x, key)
