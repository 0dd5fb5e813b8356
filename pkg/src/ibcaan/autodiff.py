"""Dense float64 tensors with a define-by-run reverse-mode tape.

Operations executed inside an active :class:`Tape` record a backward rule
whenever one of their inputs requires a gradient.  Outside a tape they are
plain numpy computations and produce constant tensors.

Broadcasting is deliberately narrow.  A binary elementwise op accepts

* two operands of identical shape,
* a scalar (shape ``()``) against anything, or
* a 1-D operand of length ``n`` against a 2-D operand of shape ``(m, n)``
  (the bias-addition pattern: one vector added to every row).

Anything else raises :class:`ShapeError`.

Random numbers come from :func:`make_rng`, a numpy ``Generator`` on top of
the Philox-4x64 counter-based bit generator, so every stream is fully
determined by its integer seed.
"""

from __future__ import annotations

import os
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "softplus",
    "matmul",
    "concat_last_dim",
    "reduce",
    "reduce_sum",
    "reduce_mean",
    "logsumexp",
    "take_rows",
    "pick",
    "detach",
    "grad_reverse",
    "run_backward",
    "gaussian_sample",
    "make_rng",
]

# Finite-output checks after every forward op.  Off by default for speed.
DEBUG = os.environ.get("IBCAAN_DEBUG", "") not in ("", "0")


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""

    def __init__(self, op: str, *shapes: tuple[int, ...]):
        self.op = op
        self.shapes = shapes
        names = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {names}")


class TapeError(RuntimeError):
    """Misuse of a tape (double backward, foreign graph, non-scalar loss)."""


class Tensor:
    """Immutable n-d float64 array that may participate in a tape."""

    __slots__ = ("data", "requires_grad", "node_id", "_tape", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id: int | None = None
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        arr.setflags(write=False)
        t.data = arr
        t.requires_grad = False
        t.node_id = None
        t._tape = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

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


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor._wrap(np.array(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

_ACTIVE: list["Tape"] = []


class _Record:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; every op run inside the ``with`` block that
    touches a grad-requiring tensor is appended in execution order, which is
    a topological order by construction.  A tape supports exactly one
    backward pass.
    """

    def __init__(self):
        self.records: list[_Record] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def _record(self, name, inputs, out: Tensor, backward) -> None:
        if self.consumed:
            raise TapeError("cannot record onto a tape that has already run backward")
        for t in inputs:
            if t.node_id is not None and t._tape is not self:
                raise TapeError(f"{name}: input was recorded on a different tape")
        out.requires_grad = True
        out.node_id = len(self.records)
        out._tape = self
        self.records.append(_Record(name, inputs, out, backward))

    def backward(self, loss: Tensor, wrt):
        """Gradients of scalar ``loss`` with respect to ``wrt``.

        ``wrt`` is either a mapping of names to leaf tensors or a sequence of
        tensors; the result has the same keys (or order).  Tensors the loss
        does not depend on get zero gradients.
        """
        if self.consumed:
            raise TapeError("backward already ran on this tape; record a new forward pass")
        if loss.shape != ():
            raise TapeError(f"loss must be a scalar, got shape {loss.shape}")
        if loss.node_id is not None and loss._tape is not self:
            raise TapeError("loss was not recorded on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {}
        if loss.node_id is not None:
            grads[id(loss)] = np.ones((), dtype=np.float64)
            for rec in reversed(self.records):
                g = grads.pop(id(rec.output), None)
                if g is None:
                    continue
                for inp, ig in zip(rec.inputs, rec.backward(g)):
                    if ig is None or not inp.requires_grad:
                        continue
                    key = id(inp)
                    prev = grads.get(key)
                    grads[key] = ig if prev is None else prev + ig

        def lookup(t: Tensor) -> np.ndarray:
            g = grads.get(id(t))
            return np.zeros(t.shape) if g is None else np.asarray(g, dtype=np.float64)

        if isinstance(wrt, Mapping):
            return {k: lookup(t) for k, t in wrt.items()}
        return [lookup(t) for t in wrt]


def run_backward(tape: Tape, loss: Tensor, wrt):
    """Functional alias for :meth:`Tape.backward`."""
    return tape.backward(loss, wrt)


def _finish(name: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward) -> Tensor:
    if DEBUG and not np.all(np.isfinite(out_data)):
        if all(np.all(np.isfinite(t.data)) for t in inputs):
            raise FloatingPointError(f"{name} produced non-finite values from finite inputs")
    out = Tensor._wrap(out_data)
    if _ACTIVE and any(t.requires_grad for t in inputs):
        _ACTIVE[-1]._record(name, tuple(inputs), out, backward)
    return out


# ---------------------------------------------------------------------------
# Elementwise family
# ---------------------------------------------------------------------------


def _broadcast_kind(name: str, a: Tensor, b: Tensor) -> str:
    sa, sb = a.shape, b.shape
    if sa == sb:
        return "same"
    if sa == () or sb == ():
        return "scalar"
    if a.ndim == 2 and b.ndim == 1 and sa[1] == sb[0]:
        return "row_b"
    if b.ndim == 2 and a.ndim == 1 and sb[1] == sa[0]:
        return "row_a"
    raise ShapeError(name, sa, sb)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # row-vector operand: sum over the row axis
    return g.sum(axis=0)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind("add", a, b)
    sa, sb = a.shape, b.shape
    return _finish(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind("sub", a, b)
    sa, sb = a.shape, b.shape
    return _finish(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_kind("mul", a, b)
    ad, bd = a.data, b.data
    return _finish(
        "mul", (a, b), ad * bd,
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _finish("neg", (x,), -x.data, lambda g: (-g,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)
    return _finish("exp", (x,), y, lambda g: (g * y,))


def log(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _finish("log", (x,), np.log(xd), lambda g: (g / xd,))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _finish("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form never overflows and gives exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return _finish("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def softplus(x) -> Tensor:
    """``log(1 + exp(x))`` in overflow-safe form."""
    x = as_tensor(x)
    xd = x.data
    return _finish("softplus", (x,), np.logaddexp(0.0, xd), lambda g: (g * _sigmoid(xd),))


# ---------------------------------------------------------------------------
# Structural ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data
    return _finish("matmul", (a, b), ad @ bd, lambda g: (g @ bd.T, ad.T @ g))


def concat_last_dim(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise ShapeError("concat_last_dim", a.shape, b.shape)
    p = a.shape[-1]
    return _finish(
        "concat_last_dim", (a, b), np.concatenate([a.data, b.data], axis=-1),
        lambda g: (g[..., :p], g[..., p:]),
    )


def reduce(x, mode: str = "sum", axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if mode not in ("sum", "mean"):
        raise ValueError(f"reduce mode must be 'sum' or 'mean', got {mode!r}")
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ValueError(f"axis {axis} out of range for shape {x.shape}")
    shape = x.shape
    n = x.data.size if axis is None else shape[axis]
    if mode == "sum":
        out = x.data.sum(axis=axis)
    else:
        if n == 0:
            raise ValueError("mean over an empty axis")
        out = x.data.mean(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        g = np.broadcast_to(g, shape)
        return (g / n if mode == "mean" else np.array(g),)

    return _finish(f"reduce_{mode}", (x,), np.asarray(out), backward)


def reduce_sum(x, axis: int | None = None) -> Tensor:
    return reduce(x, "sum", axis)


def reduce_mean(x, axis: int | None = None) -> Tensor:
    return reduce(x, "mean", axis)


def logsumexp(x) -> Tensor:
    """Row-wise log-sum-exp of a 2-D tensor, shape ``(m,)``."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] == 0:
        raise ShapeError("logsumexp", x.shape)
    xd = x.data
    m = xd.max(axis=1, keepdims=True)
    e = np.exp(xd - m)
    s = e.sum(axis=1, keepdims=True)
    out = (m + np.log(s))[:, 0]
    soft = e / s
    return _finish("logsumexp", (x,), out, lambda g: (g[:, None] * soft,))


def take_rows(x, index) -> Tensor:
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    if x.ndim < 1:
        raise ShapeError("take_rows", x.shape)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        np.add.at(full, idx, g)
        return (full,)

    return _finish("take_rows", (x,), x.data[idx], backward)


def pick(x, index) -> Tensor:
    """``x[i, index[i]]`` for each row of a 2-D tensor."""
    x = as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError("pick", x.shape, idx.shape)
    rows = np.arange(x.shape[0])
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[rows, idx] = g
        return (full,)

    return _finish("pick", (x,), x.data[rows, idx], backward)


def detach(x) -> Tensor:
    """Same values, cut from the tape."""
    return Tensor._wrap(as_tensor(x).data)


def grad_reverse(x, lam: float) -> Tensor:
    """Identity forward; multiplies the incoming gradient by ``-lam``."""
    x = as_tensor(x)
    lam = float(lam)
    if not lam >= 0.0:
        raise ValueError(f"gradient reversal scale must be nonnegative, got {lam}")
    return _finish("grad_reverse", (x,), x.data, lambda g: (-lam * g,))


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by the Philox-4x64 counter-based bit generator."""
    return np.random.Generator(np.random.Philox(int(seed)))


def gaussian_sample(shape, rng: np.random.Generator) -> Tensor:
    """I.i.d. standard normal draws as a constant (never recorded) tensor."""
    return Tensor._wrap(rng.standard_normal(tuple(shape)))


def numeric_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function, used by gradient checks."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    of = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn(x)
        flat[i] = orig - step
        fm = fn(x)
        flat[i] = orig
        of[i] = (fp - fm) / (2.0 * step)
    return out
