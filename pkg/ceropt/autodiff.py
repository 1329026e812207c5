"""
Forward-mode derivatives through plain NumPy code.

A `DualArray` carries a value array and a tangent array with one extra
trailing axis, one entry per seed direction. It takes part in NumPy's
`__array_ufunc__` / `__array_function__` protocols, so model code written
with ordinary NumPy calls (np.sin, np.stack, np.linalg.solve, @, ...) runs
unchanged on duals and returns exact directional derivatives.

Only primitives registered in `UFUNC_RULES` and `FUNCTION_RULES` are
differentiable. Anything else raises `UnregisteredPrimitiveError` instead of
silently returning a value without derivative.
"""
from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class UnregisteredPrimitiveError(TypeError):
    """
    Raised when a DualArray reaches a NumPy primitive without a derivative rule.
    """


class DualArray:
    """
    Value plus tangents along `n_seeds` directions.

    value   : shape S
    tangent : shape S + (n_seeds,)
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value, tangent):
        value = np.asarray(value, dtype=float)
        tangent = np.asarray(tangent, dtype=float)
        if tangent.shape[:-1] != value.shape:
            raise ValueError(
                f"tangent shape {tangent.shape} does not extend value shape {value.shape}"
            )
        self.value = value
        self.tangent = tangent

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def n_seeds(self):
        return self.tangent.shape[-1]

    @property
    def T(self):
        if self.ndim < 2:
            return self
        return DualArray(self.value.swapaxes(-1, -2), self.tangent.swapaxes(-2, -3))

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"DualArray(value={self.value!r}, n_seeds={self.n_seeds})"

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        value = self.value.reshape(shape)
        return DualArray(value, self.tangent.reshape(value.shape + (self.n_seeds,)))

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return DualArray(self.value[idx], self.tangent[idx + (slice(None),)])

    # Operators are routed through ufuncs so mixed dual/ndarray/scalar
    # expressions all end up in __array_ufunc__.
    def __add__(self, other):
        return np.add(self, other)

    def __radd__(self, other):
        return np.add(other, self)

    def __sub__(self, other):
        return np.subtract(self, other)

    def __rsub__(self, other):
        return np.subtract(other, self)

    def __mul__(self, other):
        return np.multiply(self, other)

    def __rmul__(self, other):
        return np.multiply(other, self)

    def __truediv__(self, other):
        return np.divide(self, other)

    def __rtruediv__(self, other):
        return np.divide(other, self)

    def __pow__(self, other):
        return np.power(self, other)

    def __matmul__(self, other):
        return np.matmul(self, other)

    def __rmatmul__(self, other):
        return np.matmul(other, self)

    def __neg__(self):
        return np.negative(self)

    def __pos__(self):
        return self

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        rule = UFUNC_RULES.get(ufunc)
        if method != "__call__" or kwargs or rule is None:
            raise UnregisteredPrimitiveError(
                f"no derivative rule for ufunc '{ufunc.__name__}' (method={method}, kwargs={sorted(kwargs)})"
            )
        return rule(*inputs)

    def __array_function__(self, func, types, args, kwargs):
        rule = FUNCTION_RULES.get(func)
        if rule is None:
            raise UnregisteredPrimitiveError(f"no derivative rule for function '{func.__name__}'")
        return rule(*args, **kwargs)


# ------------------------------------------------------------------
# helpers

def value_of(x) -> np.ndarray:
    """Strip tangents; plain inputs pass through as float arrays."""
    if isinstance(x, DualArray):
        return x.value
    return np.asarray(x, dtype=float)


def _parts(x):
    if isinstance(x, DualArray):
        return x.value, x.tangent
    return np.asarray(x, dtype=float), None


def _n_seeds(*xs) -> int:
    for x in xs:
        if isinstance(x, DualArray):
            return x.n_seeds
    raise UnregisteredPrimitiveError("derivative rule called without a DualArray argument")


def _make(value, *terms) -> DualArray:
    """Assemble a dual from its value and the tangent contributions (None = zero)."""
    m = next(t.shape[-1] for t in terms if t is not None)
    tangent = None
    for t in terms:
        if t is None:
            continue
        tangent = t if tangent is None else tangent + t
    return DualArray(value, np.broadcast_to(tangent, np.shape(value) + (m,)))


def _ex(v):
    """Append the seed axis to a value so it broadcasts against tangents."""
    return np.asarray(v)[..., None]


# ------------------------------------------------------------------
# ufunc rules

def _add(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    return _make(av + bv, ta, tb)


def _subtract(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    return _make(av - bv, ta, None if tb is None else -tb)


def _multiply(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    return _make(
        av * bv,
        None if ta is None else ta * _ex(bv),
        None if tb is None else _ex(av) * tb,
    )


def _divide(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    value = av / bv
    return _make(
        value,
        None if ta is None else ta / _ex(bv),
        None if tb is None else -_ex(value / bv) * tb,
    )


def _negative(a):
    av, ta = _parts(a)
    return DualArray(-av, -ta)


def _power(a, b):
    if isinstance(b, DualArray):
        raise UnregisteredPrimitiveError("power with a differentiated exponent is not registered")
    av, ta = _parts(a)
    bv = np.asarray(b, dtype=float)
    return DualArray(av ** bv, _ex(bv * av ** (bv - 1.0)) * ta)


def _unary(f, df):
    def rule(a):
        av, ta = _parts(a)
        return DualArray(f(av), _ex(df(av)) * ta)
    return rule


def _matmul(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    a_vec = av.ndim == 1
    b_vec = bv.ndim == 1
    if a_vec:
        av = av[None, :]
        ta = None if ta is None else ta[None, ...]
    if b_vec:
        bv = bv[:, None]
        tb = None if tb is None else tb[:, None, :]

    value = av @ bv
    terms = []
    if ta is not None:
        terms.append(np.moveaxis(np.moveaxis(ta, -1, 0) @ bv, 0, -1))
    if tb is not None:
        terms.append(np.moveaxis(av @ np.moveaxis(tb, -1, 0), 0, -1))
    tangent = terms[0] if len(terms) == 1 else terms[0] + terms[1]

    if a_vec:
        value = value[..., 0, :]
        tangent = tangent[..., 0, :, :]
    if b_vec:
        value = value[..., 0]
        tangent = tangent[..., 0, :]
    return DualArray(value, tangent)


UFUNC_RULES: dict[np.ufunc, Callable] = {
    np.add: _add,
    np.subtract: _subtract,
    np.multiply: _multiply,
    np.divide: _divide,
    np.negative: _negative,
    np.power: _power,
    np.matmul: _matmul,
    np.square: _unary(np.square, lambda v: 2.0 * v),
    np.sqrt: _unary(np.sqrt, lambda v: 0.5 / np.sqrt(v)),
    np.sin: _unary(np.sin, np.cos),
    np.cos: _unary(np.cos, lambda v: -np.sin(v)),
    np.tanh: _unary(np.tanh, lambda v: 1.0 - np.tanh(v) ** 2),
    np.exp: _unary(np.exp, np.exp),
    np.log: _unary(np.log, lambda v: 1.0 / v),
}


# ------------------------------------------------------------------
# array-function rules

def _axis_t(axis: int, ndim: int) -> int:
    """Map a value axis to the matching tangent axis."""
    return axis if axis >= 0 else axis - 1


def _stack(arrays, axis=0):
    m = _n_seeds(*arrays)
    parts = [_parts(x) for x in arrays]
    shape = np.broadcast_shapes(*(v.shape for v, _ in parts))
    values = [np.broadcast_to(v, shape) for v, _ in parts]
    tangents = [
        np.zeros(shape + (m,)) if t is None else np.broadcast_to(t, shape + (m,))
        for _, t in parts
    ]
    return DualArray(np.stack(values, axis=axis), np.stack(tangents, axis=_axis_t(axis, len(shape) + 1)))


def _concatenate(arrays, axis=0):
    m = _n_seeds(*arrays)
    parts = [_parts(x) for x in arrays]
    values = [v for v, _ in parts]
    tangents = [np.zeros(v.shape + (m,)) if t is None else t for v, t in parts]
    return DualArray(np.concatenate(values, axis=axis), np.concatenate(tangents, axis=_axis_t(axis, 0)))


def _sum(a, axis=None):
    av, ta = _parts(a)
    if axis is None:
        axes = tuple(range(av.ndim))
    else:
        axes = tuple(ax % av.ndim for ax in np.atleast_1d(axis))
    return DualArray(av.sum(axis=axes), ta.sum(axis=axes))


def _reshape(a, shape):
    if isinstance(a, DualArray):
        return a.reshape(shape)
    return np.reshape(a, shape)


def _solve(a, b):
    av, ta = _parts(a)
    bv, tb = _parts(b)
    if av.ndim != 2:
        raise UnregisteredPrimitiveError("solve is registered for a single (M, M) system only")
    m = _n_seeds(a, b)
    x = np.linalg.solve(av, bv)
    rhs = np.zeros(x.shape + (m,)) if tb is None else np.array(tb, dtype=float)
    if ta is not None:
        if x.ndim == 1:
            rhs = rhs - np.einsum("ijm,j->im", ta, x)
        else:
            rhs = rhs - np.einsum("ijm,jk->ikm", ta, x)
    dx = np.linalg.solve(av, rhs.reshape(av.shape[0], -1)).reshape(rhs.shape)
    return DualArray(x, dx)


FUNCTION_RULES: dict[Callable, Callable] = {
    np.stack: _stack,
    np.concatenate: _concatenate,
    np.sum: _sum,
    np.reshape: _reshape,
    np.linalg.solve: _solve,
}


# ------------------------------------------------------------------
# seeding and Jacobians

def seed(*inputs) -> tuple[DualArray, ...]:
    """
    Lift inputs to duals whose tangents form an identity over the
    concatenation of all (flattened) inputs.
    """
    arrays = [np.asarray(x, dtype=float) for x in inputs]
    m = sum(a.size for a in arrays)
    duals = []
    offset = 0
    for a in arrays:
        t = np.zeros((a.size, m))
        t[np.arange(a.size), offset + np.arange(a.size)] = 1.0
        duals.append(DualArray(a, t.reshape(a.shape + (m,))))
        offset += a.size
    return tuple(duals)


def seed_batched(*inputs) -> tuple[DualArray, ...]:
    """
    Seed row-wise: every input has shape (n, d_a); each of the n rows gets
    its own identity over the concatenated local coordinates (m = sum d_a).
    Rows never see each other's seeds, so one pass yields n local Jacobians.
    """
    arrays = [np.atleast_2d(np.asarray(x, dtype=float)) for x in inputs]
    n = arrays[0].shape[0]
    m = sum(a.shape[1] for a in arrays)
    duals = []
    offset = 0
    for a in arrays:
        d = a.shape[1]
        t = np.zeros((n, d, m))
        t[:, np.arange(d), offset + np.arange(d)] = 1.0
        duals.append(DualArray(a, t))
        offset += d
    return tuple(duals)


def _tangent_of(out, m: int) -> np.ndarray:
    if isinstance(out, DualArray):
        return out.tangent
    # output does not depend on the inputs
    out = np.asarray(out, dtype=float)
    return np.zeros(out.shape + (m,))


def jacobian_blocks(f: Callable, *at) -> tuple[np.ndarray, ...]:
    """
    Jacobian of `f` at the given inputs, one block per input of shape
    out.shape + input.shape.
    """
    duals = seed(*at)
    m = sum(d.size for d in duals)
    out = f(*duals)
    tangent = _tangent_of(out, m)
    out_shape = tangent.shape[:-1]
    blocks = []
    offset = 0
    for d in duals:
        blocks.append(tangent[..., offset:offset + d.size].reshape(out_shape + d.shape))
        offset += d.size
    return tuple(blocks)


def jacobian(f: Callable, x) -> np.ndarray:
    """Jacobian of a single-input function, shape out.shape + x.shape."""
    return jacobian_blocks(f, x)[0]


def value_and_jacobian(f: Callable, x) -> tuple[np.ndarray, np.ndarray]:
    (d,) = seed(x)
    out = f(d)
    return value_of(out), _tangent_of(out, d.size).reshape(np.shape(value_of(out)) + d.shape)


def batch_jacobian(f: Callable, *inputs) -> tuple[np.ndarray, np.ndarray]:
    """
    Row-wise local Jacobians of a batched function.

    `f` maps inputs of shape (n, d_a) to an output of shape (n, p) where row
    k depends only on row k of the inputs. Returns (value (n, p), jac (n, p, m)).
    """
    duals = seed_batched(*inputs)
    m = sum(d.shape[1] for d in duals)
    out = f(*duals)
    return value_of(out), _tangent_of(out, m)


def batch_hessian(f: Callable, weights: np.ndarray, *inputs, rel_step: float = 1e-6) -> np.ndarray:
    """
    Row-wise Hessians of sum_r weights[k, r] * f(...)[k, r] with respect to the
    concatenated local inputs, shape (n, m, m).

    Second derivatives are central differences of the exact forward-mode
    gradients; the result is symmetrized.
    """
    arrays = [np.atleast_2d(np.asarray(x, dtype=float)) for x in inputs]
    sizes = [a.shape[1] for a in arrays]
    offsets = np.cumsum([0] + sizes)
    n = arrays[0].shape[0]
    m = int(offsets[-1])
    weights = np.asarray(weights, dtype=float)
    hess = np.zeros((n, m, m))

    def weighted_gradient(args):
        _, jac = batch_jacobian(f, *args)
        return np.einsum("np,npm->nm", weights, jac)

    for a_idx, a in enumerate(arrays):
        for j in range(sizes[a_idx]):
            h = rel_step * np.maximum(1.0, np.abs(a[:, j]))
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[a_idx][:, j] += h
            minus[a_idx][:, j] -= h
            col = offsets[a_idx] + j
            hess[:, :, col] = (weighted_gradient(plus) - weighted_gradient(minus)) / (2.0 * h[:, None])

    return 0.5 * (hess + hess.transpose(0, 2, 1))


def hessian(f: Callable, x, rel_step: float = 1e-6) -> np.ndarray:
    """Hessian of a scalar function of one flat input (central differences of exact gradients)."""
    x = np.asarray(x, dtype=float).ravel()

    def batched(xb):
        return np.reshape(f(xb[0]), (1, 1))

    return batch_hessian(batched, np.ones((1, 1)), x[None, :], rel_step=rel_step)[0]


def registered_primitives() -> list[str]:
    """Names of every primitive with a derivative rule."""
    names = [u.__name__ for u in UFUNC_RULES] + [f.__name__ for f in FUNCTION_RULES]
    return sorted(names)


def ensure_registered(names: Sequence[str]) -> None:
    """Fail loudly if a model relies on a primitive without a rule."""
    missing = sorted(set(names) - set(registered_primitives()))
    if missing:
        raise UnregisteredPrimitiveError(f"primitives without derivative rules: {missing}")
