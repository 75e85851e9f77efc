"""Minimal define-by-run reverse-mode autodiff over dense float64 matrices.

Each operation appends a record to a :class:`Tape`. Tapes are created
lazily by the first operation touching a ``requires_grad`` leaf and merged
when two independently started computations meet, so parameters never
need to be registered up front. :func:`backward` walks the tape once in
reverse recording order; a second call on the same tape raises.

Broadcasting is limited to a ``1 x d`` row vector against an ``n x d``
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DimensionError, DomainError, StateError


class Tape:
    __slots__ = ("records", "consumed", "_parent")

    def __init__(self):
        self.records = []
        self.consumed = False
        self._parent = None

    def root(self) -> "Tape":
        t = self
        while t._parent is not None:
            t = t._parent
        return t

    def absorb(self, other: "Tape") -> None:
        # records of independent tapes share no dependencies, so appending keeps topological order
        if other is self:
            return
        if other.consumed or self.consumed:
            raise StateError("cannot combine a tape that was already differentiated")
        self.records.extend(other.records)
        other.records = []
        other._parent = self

    def __len__(self):
        return len(self.records)


class DiffMatrix:
    """A dense 2-D float64 array that can take part in a recorded computation."""

    __array_priority__ = 1000

    def __init__(self, values, requires_grad: bool = False):
        v = np.array(values, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim != 2:
            raise DimensionError(f"DiffMatrix needs a 2-D array, got {v.ndim}-D")
        self.values = v
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None
        self._is_leaf = True

    @property
    def shape(self):
        return self.values.shape

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def tape(self) -> Optional[Tape]:
        return self._tape.root() if self._tape is not None else None

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.values.size != 1:
            raise DimensionError("item() needs a 1x1 matrix")
        return float(self.values[0, 0])

    def numpy(self) -> np.ndarray:
        return self.values

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffMatrix(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, 1.0 / other)
        return divide_elementwise(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def as_matrix(x) -> DiffMatrix:
    return x if isinstance(x, DiffMatrix) else DiffMatrix(x)


def constant(x) -> DiffMatrix:
    return DiffMatrix(x, requires_grad=False)


def parameter(x) -> DiffMatrix:
    return DiffMatrix(x, requires_grad=True)


def _record(values: np.ndarray, parents: Sequence[DiffMatrix], backward_fn: Callable) -> DiffMatrix:
    out = DiffMatrix.__new__(DiffMatrix)
    out.values = values
    out.grad = None
    out._is_leaf = False
    live = [p for p in parents if p.requires_grad]
    out.requires_grad = bool(live)
    out._tape = None
    if not live:
        return out
    tape = None
    for p in live:
        t = p.tape
        if t is None:
            continue
        if t.consumed:
            raise StateError("operand belongs to a tape that was already differentiated")
        if tape is None:
            tape = t
        else:
            tape.absorb(t)
    if tape is None:
        tape = Tape()
    out._tape = tape
    tape.records.append((out, tuple(parents), backward_fn))
    return out


def _check_elementwise(a: DiffMatrix, b: DiffMatrix, name: str):
    if a.shape == b.shape:
        return
    if b.rows == 1 and b.cols == a.cols:
        return
    if a.rows == 1 and a.cols == b.cols:
        return
    raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def matmul(a, b) -> DiffMatrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.values, b.values
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add(a, b) -> DiffMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_elementwise(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.values + b.values, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> DiffMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_elementwise(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.values - b.values, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def hadamard(a, b) -> DiffMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_elementwise(a, b, "hadamard")
    av, bv = a.values, b.values
    return _record(
        av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape))
    )


def divide_elementwise(a, b) -> DiffMatrix:
    a, b = as_matrix(a), as_matrix(b)
    _check_elementwise(a, b, "divide")
    av, bv = a.values, b.values
    out = av / bv
    return _record(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def scalar_mul(a, c: float) -> DiffMatrix:
    a = as_matrix(a)
    c = float(c)
    return _record(a.values * c, (a,), lambda g: (g * c,))


def broadcast_row(row, n: int) -> DiffMatrix:
    """Repeat a ``1 x d`` row ``n`` times."""
    row = as_matrix(row)
    if row.rows != 1:
        raise DimensionError(f"broadcast_row expects a single row, got {row.shape}")
    return _record(
        np.repeat(row.values, n, axis=0), (row,), lambda g: (g.sum(axis=0, keepdims=True),)
    )


def elementwise_pow(base, exponent) -> DiffMatrix:
    """``base ** exponent`` with ``exponent`` a row vector (or same shape).

    The base must be strictly positive so the exponent gradient
    ``out * ln(base)`` is defined.
    """
    base, exponent = as_matrix(base), as_matrix(exponent)
    _check_elementwise(base, exponent, "elementwise_pow")
    bv, ev = base.values, exponent.values
    if np.any(bv <= 0):
        raise DomainError("elementwise_pow needs a strictly positive base")
    out = bv**ev
    log_b = np.log(bv)

    def back(g):
        return (
            _unbroadcast(g * ev * out / bv, bv.shape),
            _unbroadcast(g * out * log_b, ev.shape),
        )

    return _record(out, (base, exponent), back)


def relu(a) -> DiffMatrix:
    a = as_matrix(a)
    mask = a.values > 0
    return _record(np.where(mask, a.values, 0.0), (a,), lambda g: (g * mask,))


def mean_over_rows(a) -> DiffMatrix:
    a = as_matrix(a)
    n = a.rows
    return _record(
        a.values.mean(axis=0, keepdims=True),
        (a,),
        lambda g: (np.repeat(g / n, n, axis=0),),
    )


def var_over_rows(a) -> DiffMatrix:
    """Biased (divide by n) per-column variance."""
    a = as_matrix(a)
    n = a.rows
    centered = a.values - a.values.mean(axis=0, keepdims=True)
    return _record(
        (centered**2).mean(axis=0, keepdims=True),
        (a,),
        lambda g: (2.0 * centered * g / n,),
    )


def sqrt_eps(a, eps: float) -> DiffMatrix:
    a = as_matrix(a)
    out = np.sqrt(a.values + eps)
    return _record(out, (a,), lambda g: (g / (2.0 * out),))


def _segments(offsets, n: int):
    offsets = np.asarray(offsets, dtype=np.int64)
    if len(offsets) == 0 or offsets[-1] != n:
        raise DimensionError(f"segment offsets {offsets.tolist()} do not cover {n} rows")
    starts = np.concatenate([[0], offsets[:-1]])
    sizes = offsets - starts
    if np.any(sizes <= 0):
        raise DimensionError("segment offsets must be strictly increasing")
    return starts, sizes


def segment_mean(a, offsets) -> DiffMatrix:
    """Per-segment column means, broadcast back to every row of the segment."""
    a = as_matrix(a)
    starts, sizes = _segments(offsets, a.rows)
    means = np.add.reduceat(a.values, starts, axis=0) / sizes[:, None]

    def back(g):
        gs = np.add.reduceat(g, starts, axis=0) / sizes[:, None]
        return (np.repeat(gs, sizes, axis=0),)

    return _record(np.repeat(means, sizes, axis=0), (a,), back)


def segment_sum_normalize(a, offsets) -> DiffMatrix:
    """Divide every column of every segment by its segment sum."""
    a = as_matrix(a)
    starts, sizes = _segments(offsets, a.rows)
    sums = np.repeat(np.add.reduceat(a.values, starts, axis=0), sizes, axis=0)
    out = a.values / sums

    def back(g):
        inner = np.repeat(np.add.reduceat(g * out, starts, axis=0), sizes, axis=0)
        return ((g - inner) / sums,)

    return _record(out, (a,), back)


def concat_rows(parts: Sequence) -> DiffMatrix:
    parts = [as_matrix(p) for p in parts]
    if len({p.cols for p in parts}) > 1:
        raise DimensionError("concat_rows: column counts differ")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def back(g):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _record(np.concatenate([p.values for p in parts], axis=0), tuple(parts), back)


def take_rows(a, index) -> DiffMatrix:
    a = as_matrix(a)
    idx = np.asarray(index, dtype=np.int64)

    def back(g):
        out = np.zeros_like(a.values)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.values[idx], (a,), back)


def sum_all(a) -> DiffMatrix:
    a = as_matrix(a)
    shape = a.shape
    return _record(np.array([[a.values.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a) -> DiffMatrix:
    a = as_matrix(a)
    return scalar_mul(sum_all(a), 1.0 / a.values.size)


def backward(loss: DiffMatrix) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.shape != (1, 1):
        raise DimensionError(f"backward needs a 1x1 loss, got {loss.shape}")
    tape = loss.tape
    if tape is None:
        return
    if tape.consumed:
        raise StateError("backward already ran on this tape; rebuild the computation")
    tape.consumed = True
    grads = {id(loss): np.ones((1, 1))}
    leaves = {}
    for out, parents, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for p, pg in zip(parents, fn(g)):
            if not p.requires_grad:
                continue
            key = id(p)
            grads[key] = grads[key] + pg if key in grads else pg
            if p._is_leaf:
                leaves[key] = p
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    analytic: np.ndarray
    numeric: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)


def finite_difference_check(
    f: Callable[[DiffMatrix], DiffMatrix], x: DiffMatrix, h: float = 1e-5, tol: float = 1e-4
) -> GradCheckReport:
    """Compare the tape gradient of ``f(x)`` with central differences.

    The error per entry is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    saved = x.grad
    x.grad = None
    loss = f(x)
    backward(loss)
    analytic = x.grad if x.grad is not None else np.zeros_like(x.values)
    x.grad = saved
    numeric = np.zeros_like(x.values)
    for idx in np.ndindex(*x.shape):
        orig = x.values[idx]
        x.values[idx] = orig + h
        up = f(x).values[0, 0]
        x.values[idx] = orig - h
        down = f(x).values[0, 0]
        x.values[idx] = orig
        numeric[idx] = (up - down) / (2.0 * h)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return GradCheckReport(float(err.max()) if err.size else 0.0, tol, analytic, numeric)
