"""Tape-based reverse-mode differentiation over numpy arrays.

Every node on a :class:`Tape` holds a numpy array (0-d for scalars).  A node
records its parents and a vector-Jacobian closure; :meth:`Tape.backward`
walks the tape once in reverse.  Parents always precede children, so the
append order is a topological order.

Model code is written against the dispatching functions in this module
(``exp``, ``tanh``, ``softplus`` ...) and the operators of :class:`Var`, so
the same rhs runs on plain arrays (fast simulation) and on tape variables
(training).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

LN2 = float(np.log(2.0))


class AutodiffError(ArithmeticError):
    """Invalid primitive evaluation (division by zero, log of a non-positive)."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message if node_id is None else f"{message} (node {node_id})")
        self.node_id = node_id


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tape:
    """Append-only record of array-valued nodes."""

    def __init__(self) -> None:
        self.ops: list[str] = []
        self.values: list[np.ndarray] = []
        self.parents: list[tuple[int, ...]] = []
        self._vjps: list[Callable[[np.ndarray], tuple[np.ndarray, ...]] | None] = []

    def __len__(self) -> int:
        return len(self.values)

    def _push(self, op, value, parents=(), vjp=None) -> "Var":
        self.ops.append(op)
        self.values.append(value)
        self.parents.append(tuple(parents))
        self._vjps.append(vjp)
        return Var(self, len(self.values) - 1)

    def leaf(self, value) -> "Var":
        return self._push("leaf", np.array(value, dtype=float))

    def is_leaf(self, node_id: int) -> bool:
        return self._vjps[node_id] is None

    def backward(self, output: "Var | int") -> list[np.ndarray | None]:
        """Reverse accumulation from a scalar node.

        Returns a list indexed by node id; leaves that the output does not
        depend on get a zero array, interior nodes are ``None``.
        """
        out_id = output.id if isinstance(output, Var) else int(output)
        if self.values[out_id].size != 1:
            raise AutodiffError("backward() needs a scalar output", out_id)
        grads: list[np.ndarray | None] = [None] * len(self.values)
        grads[out_id] = np.ones_like(self.values[out_id])
        for k in range(out_id, -1, -1):
            g = grads[k]
            vjp = self._vjps[k]
            if g is None or vjp is None:
                continue
            for parent, pg in zip(self.parents[k], vjp(g)):
                if grads[parent] is None:
                    grads[parent] = pg
                else:
                    grads[parent] = grads[parent] + pg
            if k != out_id:
                grads[k] = None  # interior adjoints are not needed after use
        for k in range(len(self.values)):
            if self._vjps[k] is None and grads[k] is None:
                grads[k] = np.zeros_like(self.values[k])
        return grads

    def grad(self, output: "Var", wrt: "Var") -> np.ndarray:
        return self.backward(output)[wrt.id]


class Var:
    """Handle to a node on a tape; supports arithmetic with arrays and Vars."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tape: Tape, node_id: int):
        self.tape = tape
        self.id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __len__(self) -> int:
        return len(self.value)

    def __repr__(self) -> str:
        return f"Var(id={self.id}, value={self.value!r})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __rmatmul__ = lambda self, o: matmul(o, self)
    __neg__ = lambda self: neg(self)
    __abs__ = lambda self: absolute(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    @property
    def T(self) -> "Var":
        return transpose(self)

    def sum(self, axis=None) -> "Var":
        return total(self, axis)

    def reshape(self, *shape) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def is_var(x) -> bool:
    return isinstance(x, Var)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("no Var operand")


# --------------------------------------------------------------------------
# binary elementwise primitives

def _binary(op, a, b, value, da, db):
    """Record a broadcasting binary op; ``da``/``db`` map upstream -> partial."""
    tape = _tape_of(a, b)
    parents, fns = [], []
    if isinstance(a, Var):
        if a.tape is not tape:
            raise AutodiffError("operands live on different tapes")
        parents.append(a.id)
        fns.append((da, a.value.shape))
    if isinstance(b, Var):
        if b.tape is not tape:
            raise AutodiffError("operands live on different tapes")
        parents.append(b.id)
        fns.append((db, b.value.shape))

    def vjp(g):
        return tuple(_unbroadcast(fn(g), shape) for fn, shape in fns)

    return tape._push(op, value, parents, vjp)


def add(a, b):
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.add(a, b)
    return _binary("add", a, b, value_of(a) + value_of(b), lambda g: g, lambda g: g)


def sub(a, b):
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.subtract(a, b)
    return _binary("sub", a, b, value_of(a) - value_of(b), lambda g: g, lambda g: -g)


def mul(a, b):
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    return _binary("mul", a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.divide(a, b)
    av, bv = value_of(a), value_of(b)
    if np.any(bv == 0):
        raise AutodiffError("division by zero", len(_tape_of(a, b)))
    out = av / bv
    return _binary("div", a, b, out, lambda g: g / bv, lambda g: -g * out / bv)


def power(a, exponent: float):
    """``a ** exponent`` for a constant real exponent."""
    if isinstance(exponent, Var):
        raise TypeError("power() supports constant exponents only")
    if not isinstance(a, Var):
        return np.power(a, exponent)
    av = a.value
    out = av ** exponent
    return a.tape._push("pow", out, (a.id,), lambda g: (g * exponent * av ** (exponent - 1),))


# --------------------------------------------------------------------------
# unary primitives

def _unary(op, x, value, local):
    return x.tape._push(op, value, (x.id,), lambda g: (g * local,))


def neg(x):
    if not isinstance(x, Var):
        return np.negative(x)
    return x.tape._push("neg", -x.value, (x.id,), lambda g: (-g,))


def exp(x):
    if not isinstance(x, Var):
        return np.exp(x)
    out = np.exp(x.value)
    return _unary("exp", x, out, out)


def log(x):
    if not isinstance(x, Var):
        return np.log(x)
    if np.any(x.value <= 0):
        raise AutodiffError("log of a non-positive value", x.id)
    return _unary("log", x, np.log(x.value), 1.0 / x.value)


def tanh(x):
    if not isinstance(x, Var):
        return np.tanh(x)
    out = np.tanh(x.value)
    return _unary("tanh", x, out, 1.0 - out * out)


def _sigmoid(x):
    return expit(x)


def sigmoid(x):
    if not isinstance(x, Var):
        return _sigmoid(x)
    out = _sigmoid(x.value)
    return _unary("sigmoid", x, out, out * (1.0 - out))


def _softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def softplus(x):
    """log(1 + e^x), overflow-safe."""
    if not isinstance(x, Var):
        return _softplus(x)
    return _unary("softplus", x, _softplus(x.value), _sigmoid(x.value))


def inverse_softplus(y):
    """Inverse of :func:`softplus` for y > 0 (plain arrays only)."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("inverse_softplus needs strictly positive values")
    # log(expm1(y)) = y + log(1 - exp(-y)), stable for large y
    return y + np.log(-np.expm1(-y))


def _log_cosh(x):
    a = np.abs(np.asarray(x, dtype=float))
    return a + np.log1p(np.exp(-2.0 * a)) - LN2


def log_cosh(x):
    """log(cosh(x)) without overflow for large |x|."""
    if not isinstance(x, Var):
        return _log_cosh(x)
    return _unary("log_cosh", x, _log_cosh(x.value), np.tanh(x.value))


def absolute(x):
    if not isinstance(x, Var):
        return np.abs(x)
    return _unary("abs", x, np.abs(x.value), np.sign(x.value))


# --------------------------------------------------------------------------
# structural primitives

def matmul(a, b):
    if not (isinstance(a, Var) or isinstance(b, Var)):
        return np.matmul(a, b)
    tape = _tape_of(a, b)
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    parents, fns = [], []
    if isinstance(a, Var):
        parents.append(a.id)
        if bv.ndim == 1:
            fns.append(lambda g: _unbroadcast(np.multiply.outer(g, bv), av.shape))
        else:
            fns.append(lambda g: _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape))
    if isinstance(b, Var):
        parents.append(b.id)
        if av.ndim == 1:
            fns.append(lambda g: _unbroadcast(np.multiply.outer(av, g), bv.shape))
        elif bv.ndim == 1:
            fns.append(lambda g: _unbroadcast((np.swapaxes(av, -1, -2) @ g[..., None])[..., 0], bv.shape))
        else:
            fns.append(lambda g: _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape))
    return tape._push("matmul", out, parents, lambda g: tuple(fn(g) for fn in fns))


def total(x, axis=None):
    """Sum over ``axis`` (all axes when None)."""
    if not isinstance(x, Var):
        return np.sum(x, axis=axis)
    shape = x.value.shape
    out = np.sum(x.value, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape._push("sum", out, (x.id,), vjp)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def getitem(x, index):
    if not isinstance(x, Var):
        return np.asarray(x)[index]
    shape = x.value.shape
    out = x.value[index]
    basic = _is_basic_index(index)

    def vjp(g):
        full = np.zeros(shape)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return x.tape._push("getitem", np.array(out, dtype=float), (x.id,), vjp)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)
    old = x.value.shape
    return x.tape._push("reshape", x.value.reshape(shape), (x.id,), lambda g: (g.reshape(old),))


def transpose(x):
    if not isinstance(x, Var):
        return np.swapaxes(x, -1, -2)
    return x.tape._push("transpose", np.swapaxes(x.value, -1, -2), (x.id,),
                        lambda g: (np.swapaxes(g, -1, -2),))


def stack(items: Sequence, axis: int = -1):
    """Stack arrays/Vars of equal shape along a new axis."""
    if not any(isinstance(i, Var) for i in items):
        return np.stack([np.asarray(i, dtype=float) for i in items], axis=axis)
    tape = _tape_of(*items)
    vals = [value_of(i) for i in items]
    shape = np.broadcast_shapes(*{v.shape for v in vals})
    out = np.stack([v if v.shape == shape else np.broadcast_to(v, shape) for v in vals], axis=axis)
    var_pos = [(k, i) for k, i in enumerate(items) if isinstance(i, Var)]

    def vjp(g):
        return tuple(_unbroadcast(np.take(g, k, axis=axis), i.value.shape) for k, i in var_pos)

    return tape._push("stack", out, [i.id for _, i in var_pos], vjp)


def concatenate(items: Sequence, axis: int = -1):
    if not any(isinstance(i, Var) for i in items):
        return np.concatenate([np.asarray(i, dtype=float) for i in items], axis=axis)
    tape = _tape_of(*items)
    vals = [value_of(i) for i in items]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    var_pos = [(k, i) for k, i in enumerate(items) if isinstance(i, Var)]

    def vjp(g):
        return tuple(np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis) for k, _ in var_pos)

    return tape._push("concat", out, [i.id for _, i in var_pos], vjp)


# --------------------------------------------------------------------------
# parameters and gradient checking

@dataclass(frozen=True)
class Segment:
    start: int
    stop: int
    shape: tuple[int, ...]


@dataclass
class ParameterVector:
    """Flat parameter array with named, disjoint, covering segments."""

    values: np.ndarray
    segments: dict[str, Segment] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        pos = 0
        for name, seg in self.segments.items():
            if seg.start != pos or seg.stop < seg.start:
                raise ValueError(f"segment {name!r} does not continue at index {pos}")
            if int(np.prod(seg.shape, dtype=int)) != seg.stop - seg.start:
                raise ValueError(f"segment {name!r} shape {seg.shape} does not match its range")
            pos = seg.stop
        if pos != len(self.values):
            raise ValueError(f"segments cover {pos} entries, vector has {len(self.values)}")

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ParameterVector":
        segments, chunks, pos = {}, [], 0
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=float)
            segments[name] = Segment(pos, pos + arr.size, arr.shape)
            chunks.append(arr.ravel())
            pos += arr.size
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return cls(values, segments)

    def __len__(self) -> int:
        return len(self.values)

    def unpack(self, flat=None) -> dict:
        """Split ``flat`` (defaults to own values; may be a Var) by segment."""
        flat = self.values if flat is None else flat
        size = value_of(flat).size
        if size != len(self.values):
            raise ValueError(f"expected {len(self.values)} parameter values, got {size}")
        out = {}
        for name, seg in self.segments.items():
            part = getitem(flat, slice(seg.start, seg.stop))
            out[name] = reshape(part, seg.shape)
        return out

    def with_values(self, values) -> "ParameterVector":
        return ParameterVector(np.array(values, dtype=float), dict(self.segments))

    def segment(self, name: str) -> np.ndarray:
        seg = self.segments[name]
        return self.values[seg.start:seg.stop].reshape(seg.shape)

    def index_of(self, name: str) -> slice:
        seg = self.segments[name]
        return slice(seg.start, seg.stop)


def finite_diff_gradient(f: Callable[[np.ndarray], float], theta, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=float)
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy()
        up[i] += eps
        dn = theta.copy()
        dn[i] -= eps
        f_up, f_dn = float(f(up)), float(f(dn))
        if not (np.isfinite(f_up) and np.isfinite(f_dn)):
            raise FloatingPointError(f"non-finite function value perturbing coordinate {i}")
        grad[i] = (f_up - f_dn) / (2.0 * eps)
    return grad


def value_and_grad(f: Callable, theta) -> tuple[float, np.ndarray]:
    """Evaluate ``f`` on a fresh tape and return (value, gradient wrt theta)."""
    tape = Tape()
    leaf = tape.leaf(np.array(theta, dtype=float))
    out = f(leaf)
    if not isinstance(out, Var):
        return float(out), np.zeros_like(leaf.value)
    grads = tape.backward(out)
    return float(out.value), grads[leaf.id]
