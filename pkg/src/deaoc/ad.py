"""Vectorized forward-mode automatic differentiation with dual numbers.

A :class:`Dual` carries a value array of shape ``S`` and a tangent array of
shape ``S + (k,)``: one tangent per seeded input direction.  Arithmetic
propagates all ``k`` directions at once, so seeding ``k`` local inputs with
the identity yields a full local Jacobian in a single evaluation.

The helpers in this module (:func:`stack`, :func:`dot`, :func:`sqrt`, ...)
accept plain ndarrays as well, which lets the physics kernels be written once
and evaluated either for values or for derivatives.
"""

from __future__ import annotations

import numpy as np


class Dual:
    __slots__ = ("val", "eps")
    __array_ufunc__ = None  # make ndarray (op) Dual dispatch to Dual's reflected ops

    def __init__(self, val, eps):
        self.val = np.asarray(val, dtype=float)
        self.eps = np.asarray(eps, dtype=float)

    # -- shape helpers ---------------------------------------------------
    @property
    def shape(self):
        return self.val.shape

    @property
    def ndim(self):
        return self.val.ndim

    @property
    def nderiv(self):
        return self.eps.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, nderiv={self.nderiv})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if any(i is Ellipsis for i in idx):
            return Dual(self.val[idx], self.eps[idx + (slice(None),)])
        return Dual(self.val[idx], self.eps[idx])

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Dual(self.val.reshape(shape), self.eps.reshape(shape + (self.nderiv,)))

    def sum(self, axis=None):
        if axis is None:
            return Dual(self.val.sum(), self.eps.reshape(-1, self.nderiv).sum(axis=0))
        axis = axis % self.ndim
        return Dual(self.val.sum(axis=axis), self.eps.sum(axis=axis))

    # -- arithmetic ------------------------------------------------------
    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        other = np.asarray(other, dtype=float)
        val = self.val + other
        return Dual(val, np.broadcast_to(self.eps, val.shape + (self.nderiv,)))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val - other.val, self.eps - other.eps)
        return self + (-np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.eps * other.val[..., None] + other.eps * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.eps * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            val = self.val * inv
            return Dual(val, (self.eps - other.eps * val[..., None]) * inv[..., None])
        other = np.asarray(other, dtype=float)
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        other = np.asarray(other, dtype=float)
        return Dual(other * inv, -self.eps * (other * inv * inv)[..., None])

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("Dual exponent not supported")
        p = float(p)
        if p == 2.0:
            return self * self
        return Dual(self.val**p, self.eps * (p * self.val ** (p - 1.0))[..., None])


# -- generic helpers (ndarray or Dual) ------------------------------------

def value(x):
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def tangent(x):
    return x.eps


def is_dual(x):
    return isinstance(x, Dual)


def _nderiv(items):
    for it in items:
        if isinstance(it, Dual):
            return it.nderiv
    return None


def _promote(x, k):
    if isinstance(x, Dual):
        return x
    x = np.asarray(x, dtype=float)
    return Dual(x, np.zeros(x.shape + (k,)))


def stack(items, axis=-1):
    items = list(items)
    k = _nderiv(items)
    if k is None:
        return np.stack(items, axis=axis)
    items = [_promote(x, k) for x in items]
    ndim = items[0].ndim + 1
    axis = axis % ndim
    return Dual(
        np.stack([x.val for x in items], axis=axis),
        np.stack([x.eps for x in items], axis=axis),
    )


def concatenate(items, axis=-1):
    items = list(items)
    k = _nderiv(items)
    if k is None:
        return np.concatenate(items, axis=axis)
    items = [_promote(x, k) for x in items]
    axis = axis % items[0].ndim
    return Dual(
        np.concatenate([x.val for x in items], axis=axis),
        np.concatenate([x.eps for x in items], axis=axis),
    )


def dot(a, b):
    """Contraction over the last (component) axis."""
    return sum_(a * b, axis=-1)


def sum_(x, axis=None):
    if isinstance(x, Dual):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)


def cross(a, b):
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.val)
        return Dual(r, x.eps * (0.5 / r)[..., None])
    return np.sqrt(x)


def exp(x):
    if isinstance(x, Dual):
        e = np.exp(x.val)
        return Dual(e, x.eps * e[..., None])
    return np.exp(x)


def zeros_like(x):
    if isinstance(x, Dual):
        return Dual(np.zeros_like(x.val), np.zeros_like(x.eps))
    return np.zeros_like(np.asarray(x, dtype=float))


def seed(x):
    """Seed every entry of a 1-D array as an independent direction."""
    x = np.asarray(x, dtype=float)
    return Dual(x, np.eye(x.size).reshape(x.shape + (x.size,)))


def seed_blocks(*arrays):
    """Seed several arrays jointly; directions are numbered consecutively.

    Each array may carry leading batch axes; only its last axis is seeded, and
    the total number of directions is the sum of the last-axis lengths.
    """
    sizes = [np.shape(a)[-1] for a in arrays]
    k = sum(sizes)
    out, off = [], 0
    for a, n in zip(arrays, sizes):
        a = np.asarray(a, dtype=float)
        eps = np.zeros(a.shape + (k,))
        eps[..., np.arange(n), off + np.arange(n)] = 1.0
        out.append(Dual(a, eps))
        off += n
    return out


def jacobian(f, x):
    """Dense Jacobian of a vector function at a 1-D point (for tests/small use)."""
    y = f(seed(x))
    if not isinstance(y, Dual):
        return np.zeros(np.shape(y) + (np.size(x),))
    return y.eps
