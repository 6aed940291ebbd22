"""Forward-mode second-order jets.

A jet carries a scalar value together with its first derivatives and *pure*
second derivatives (d2/dx_i2) with respect to d input coordinates. Mixed
partials are deliberately not represented: no supported residual operator
needs them, and carrying them would double the jet width. Parameter
gradients never travel through jets; layers implement their own reverse
pass (see model.py).
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Jet2", "seed", "const", "jet_add", "jet_mul", "jet_univariate", "fd_check"]


class Jet2:
    """Value, gradient vector and diagonal-second-derivative vector."""

    __slots__ = ("value", "grad", "diag2")

    def __init__(self, value, grad, diag2):
        grad = np.asarray(grad, dtype=float)
        diag2 = np.asarray(diag2, dtype=float)
        if grad.shape != diag2.shape or grad.ndim != 1 or grad.size < 1:
            raise ValueError(f"grad/diag2 must be equal-length vectors, got {grad.shape} vs {diag2.shape}")
        self.value = float(value)
        self.grad = grad
        self.diag2 = diag2

    @property
    def d(self) -> int:
        return self.grad.size

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, diag2={self.diag2!r})"

    # Operator sugar; the named functions below are the primary interface.
    def __add__(self, other):
        return jet_add(self, other)

    def __mul__(self, other):
        return jet_mul(self, other)


def seed(x: float, i: int, d: int) -> Jet2:
    """Seed jet for input coordinate i of d: value x, grad e_i, diag2 0."""
    g = np.zeros(d)
    g[i] = 1.0
    return Jet2(x, g, np.zeros(d))


def const(c: float, d: int) -> Jet2:
    return Jet2(c, np.zeros(d), np.zeros(d))


def _check_dims(a: Jet2, b: Jet2):
    if a.d != b.d:
        raise ValueError(f"jet dimension mismatch: {a.d} vs {b.d}")


def jet_add(a: Jet2, b: Jet2) -> Jet2:
    _check_dims(a, b)
    return Jet2(a.value + b.value, a.grad + b.grad, a.diag2 + b.diag2)


def jet_mul(a: Jet2, b: Jet2) -> Jet2:
    """Product rule; diag2 follows (ab)''_i = a b''_i + 2 a'_i b'_i + b a''_i."""
    _check_dims(a, b)
    return Jet2(
        a.value * b.value,
        a.value * b.grad + b.value * a.grad,
        a.value * b.diag2 + 2.0 * a.grad * b.grad + b.value * a.diag2,
    )


def jet_univariate(a: Jet2, f, f1, f2) -> Jet2:
    """Apply a scalar function with known first/second derivatives to a jet.

    Chain rule: value f(a), grad f'(a) a'_i, diag2 f''(a) a'_i^2 + f'(a) a''_i.
    Raises on non-finite intermediates, reporting the offending value.
    """
    v = f(a.value)
    d1 = f1(a.value)
    d2 = f2(a.value)
    for name, q in (("f", v), ("f'", d1), ("f''", d2)):
        if not math.isfinite(q):
            raise ValueError(f"non-finite {name}({a.value}) = {q} in jet_univariate")
    return Jet2(v, d1 * a.grad, d2 * a.grad * a.grad + d1 * a.diag2)


def fd_check(f, x, h: float = 1e-4):
    """Central-difference gradient and diagonal second derivative of f at x.

    f maps a length-d point to a scalar; returns (grad_fd, diag2_fd). This is
    the test oracle the jet engine is validated against, so it stays dumb on
    purpose.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    d = x.size
    f0 = f(x)
    grad = np.empty(d)
    diag2 = np.empty(d)
    for i in range(d):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = f(xp)
        fm = f(xm)
        grad[i] = (fp - fm) / (2.0 * h)
        diag2[i] = (fp - 2.0 * f0 + fm) / (h * h)
    return grad, diag2
