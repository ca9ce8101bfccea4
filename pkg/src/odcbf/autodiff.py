"""Forward-mode automatic differentiation with vectorized dual numbers.

A :class:`Dual` carries a float array ``val`` of shape ``s`` together with
directional derivatives ``dot`` of shape ``s + (k,)`` along ``k`` seed
directions. Arithmetic propagates both parts, so any function written with
the operators below and the math helpers (:func:`sin`, :func:`sqrt`, ...)
can be differentiated exactly by seeding the identity, see :func:`jacobian`.

Central finite differences (:func:`fd_gradient`, :func:`fd_jacobian`) are the
always-available fallback and the checker used throughout the test suite.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Array of dual numbers: value plus derivatives along ``k`` seeds."""

    __slots__ = ("val", "dot")
    # make ndarray <op> Dual defer to our reflected operators instead of
    # broadcasting elementwise into an object array
    __array_ufunc__ = None

    def __init__(self, val, dot):
        self.val = np.asarray(val, dtype=float)
        self.dot = np.asarray(dot, dtype=float)
        if self.dot.shape[:-1] != self.val.shape:
            raise ValueError(f"dual parts misaligned: val {self.val.shape}, dot {self.dot.shape}")

    @property
    def ndir(self):
        return self.dot.shape[-1]

    def _lift(self, other):
        """Promote a plain scalar/array to a constant Dual with matching seeds."""
        if isinstance(other, Dual):
            return other
        o = np.asarray(other, dtype=float)
        return Dual(o, np.zeros(o.shape + (self.ndir,)))

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.val + o.val, self.dot + o.dot)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.val - o.val, self.dot - o.dot)

    def __rsub__(self, other):
        o = self._lift(other)
        return Dual(o.val - self.val, o.dot - self.dot)

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.val * o.val, self.dot * o.val[..., None] + o.dot * self.val[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        val = self.val / o.val
        dot = (self.dot * o.val[..., None] - o.dot * self.val[..., None]) / (o.val**2)[..., None]
        return Dual(val, dot)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __pow__(self, n):
        if not np.isscalar(n):
            raise TypeError("only scalar exponents are supported")
        val = self.val**n
        dot = (n * self.val ** (n - 1))[..., None] * self.dot
        return Dual(val, dot)

    def __neg__(self):
        return Dual(-self.val, -self.dot)

    def __pos__(self):
        return self

    # comparisons act on the value part (branching in source code)
    def __lt__(self, other):
        return self.val < _value(other)

    def __le__(self, other):
        return self.val <= _value(other)

    def __gt__(self, other):
        return self.val > _value(other)

    def __ge__(self, other):
        return self.val >= _value(other)

    def __getitem__(self, idx):
        return Dual(self.val[idx], self.dot[idx])

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, dot={self.dot!r})"


def _value(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def value(x):
    """Value part of a Dual, or the input unchanged."""
    return _value(x)


def seed(x):
    """Wrap a 1-D point with identity seeds (one direction per component)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return Dual(x, np.eye(x.size))


# -- elementwise math (dispatch on Dual vs plain) -----------------------


def _unary(x, f, df):
    if isinstance(x, Dual):
        return Dual(f(x.val), df(x.val)[..., None] * x.dot)
    return f(np.asarray(x, dtype=float))


def sin(x):
    return _unary(x, np.sin, np.cos)


def cos(x):
    return _unary(x, np.cos, lambda v: -np.sin(v))


def tan(x):
    return _unary(x, np.tan, lambda v: 1.0 / np.cos(v) ** 2)


def atan(x):
    return _unary(x, np.arctan, lambda v: 1.0 / (1.0 + v**2))


def exp(x):
    return _unary(x, np.exp, np.exp)


def log(x):
    return _unary(x, np.log, lambda v: 1.0 / v)


def sqrt(x):
    return _unary(x, np.sqrt, lambda v: 0.5 / np.sqrt(v))


def atan2(y, x):
    if not isinstance(y, Dual) and not isinstance(x, Dual):
        return np.arctan2(y, x)
    anchor = y if isinstance(y, Dual) else x
    yd, xd = anchor._lift(y), anchor._lift(x)
    val = np.arctan2(yd.val, xd.val)
    denom = (yd.val**2 + xd.val**2)[..., None]
    dot = (xd.val[..., None] * yd.dot - yd.val[..., None] * xd.dot) / denom
    return Dual(val, dot)


# -- small vector algebra ------------------------------------------------


def stack(items):
    """Stack scalars/0-d entries into a 1-D vector, Dual-aware."""
    duals = [it for it in items if isinstance(it, Dual)]
    if not duals:
        return np.array([float(it) for it in items])
    k = duals[0].ndir
    vals, dots = [], []
    for it in items:
        if isinstance(it, Dual):
            vals.append(float(it.val))
            dots.append(it.dot.reshape(k))
        else:
            vals.append(float(it))
            dots.append(np.zeros(k))
    return Dual(np.array(vals), np.stack(dots, axis=0))


def total(v):
    """Sum of all entries (scalar result)."""
    if isinstance(v, Dual):
        axes = tuple(range(v.dot.ndim - 1))
        return Dual(v.val.sum(), v.dot.sum(axis=axes) if axes else v.dot)
    return float(np.sum(v))


def dot(u, v):
    """Inner product of two 1-D vectors (either may be Dual)."""
    return total(u * v) if isinstance(u, Dual) or isinstance(v, Dual) else float(np.dot(u, v))


def matvec(mat, v):
    """Matrix times vector where either factor may be Dual."""
    if not isinstance(mat, Dual) and not isinstance(v, Dual):
        return np.asarray(mat, dtype=float) @ np.asarray(v, dtype=float)
    rows = len(_value(mat))
    return stack([dot(mat[i], v) for i in range(rows)])


def vecmat(v, mat):
    """Row vector times matrix: (v^T M) as a 1-D vector."""
    if not isinstance(mat, Dual) and not isinstance(v, Dual):
        return np.asarray(v, dtype=float) @ np.asarray(mat, dtype=float)
    cols = _value(mat).shape[1]
    return stack([dot(v, mat[:, j]) for j in range(cols)])


def norm_sq(v):
    return dot(v, v)


def vstack(blocks):
    """Stack 2-D blocks row-wise, Dual-aware. Plain blocks are promoted."""
    if not any(isinstance(b, Dual) for b in blocks):
        return np.vstack([np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks])
    k = next(b.ndir for b in blocks if isinstance(b, Dual))
    vals, dots = [], []
    for b in blocks:
        if isinstance(b, Dual):
            vals.append(np.atleast_2d(b.val))
            dots.append(b.dot.reshape(vals[-1].shape + (k,)))
        else:
            vals.append(np.atleast_2d(np.asarray(b, dtype=float)))
            dots.append(np.zeros(vals[-1].shape + (k,)))
    return Dual(np.concatenate(vals, axis=0), np.concatenate(dots, axis=0))


# -- derivative drivers --------------------------------------------------


def gradient(f, x):
    """(f(x), grad f(x)) for scalar-valued f of a 1-D point, by forward AD."""
    out = f(seed(x))
    n = np.atleast_1d(np.asarray(x, dtype=float)).size
    if not isinstance(out, Dual):
        return float(out), np.zeros(n)
    return float(out.val), np.array(out.dot, dtype=float).reshape(n)


def jacobian(f, x):
    """(f(x), J) for vector-valued f of a 1-D point, by forward AD."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = f(seed(x))
    if not isinstance(out, Dual):
        out = np.atleast_1d(np.asarray(out, dtype=float))
        return out, np.zeros((out.size, x.size))
    val = np.atleast_1d(out.val)
    return val, out.dot.reshape(val.size, x.size)


# -- central finite differences (fallback + checker) ---------------------


def fd_gradient(f, x, step=1e-6):
    """Central-difference gradient; step scaled per component by 1 + |x_i|."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(x.size)
    for i in range(x.size):
        hi = step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += hi
        xm[i] -= hi
        g[i] = (float(f(xp)) - float(f(xm))) / (2.0 * hi)
    return g


def fd_jacobian(f, x, step=1e-6):
    """Central-difference Jacobian of a vector-valued function."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        hi = step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += hi
        xm[i] -= hi
        cols.append((np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2.0 * hi))
    return np.stack(cols, axis=-1)
