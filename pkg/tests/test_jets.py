"""Jet algebra against finite differences and hand-derived values."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fekan.jets import Jet2, const, fd_check, jet_add, jet_mul, jet_univariate, seed


def test_seed_structure():
    j = seed(1.5, 1, 3)
    assert j.value == 1.5
    assert np.array_equal(j.grad, [0.0, 1.0, 0.0])
    assert np.array_equal(j.diag2, [0.0, 0.0, 0.0])
    assert j.d == 3


def test_const_has_zero_derivatives():
    j = const(4.2, 2)
    assert j.value == 4.2
    assert not j.grad.any() and not j.diag2.any()


def test_mul_hand_value():
    # (x*y) at (2,3): grad (3,2), pure seconds (0,0)
    x, y = seed(2.0, 0, 2), seed(3.0, 1, 2)
    p = jet_mul(x, y)
    assert p.value == 6.0
    assert np.array_equal(p.grad, [3.0, 2.0])
    assert np.array_equal(p.diag2, [0.0, 0.0])


def test_square_diag2():
    x = seed(3.0, 0, 1)
    q = jet_mul(x, x)
    assert q.value == 9.0 and q.grad[0] == 6.0 and q.diag2[0] == 2.0


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        jet_add(seed(0.0, 0, 1), seed(0.0, 0, 2))


def test_univariate_nonfinite_raises():
    j = seed(0.0, 0, 1)
    with pytest.raises(ValueError, match="non-finite"):
        jet_univariate(j, lambda v: float("inf"), lambda v: 1.0, lambda v: 0.0)


def _poly_jet(x, y):
    # f(x,y) = x^2 y + sin(x) * y^2, assembled from jet primitives
    jx, jy = seed(x, 0, 2), seed(y, 1, 2)
    sx = jet_univariate(jx, math.sin, math.cos, lambda v: -math.sin(v))
    return jet_add(jet_mul(jet_mul(jx, jx), jy), jet_mul(sx, jet_mul(jy, jy)))


def _poly(p):
    x, y = p
    return x * x * y + math.sin(x) * y * y


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_composite_matches_fd(x, y):
    j = _poly_jet(x, y)
    g_fd, h_fd = fd_check(_poly, [x, y], h=1e-5)
    assert np.allclose(j.grad, g_fd, rtol=1e-5, atol=1e-5)
    assert np.allclose(j.diag2, h_fd, rtol=1e-3, atol=1e-3)


def test_composite_exact_derivatives():
    x, y = 0.7, -1.2
    j = _poly_jet(x, y)
    assert j.grad[0] == pytest.approx(2 * x * y + math.cos(x) * y * y, rel=1e-12)
    assert j.grad[1] == pytest.approx(x * x + 2 * math.sin(x) * y, rel=1e-12)
    assert j.diag2[0] == pytest.approx(2 * y - math.sin(x) * y * y, rel=1e-12)
    assert j.diag2[1] == pytest.approx(2 * math.sin(x), rel=1e-12)


def test_fd_check_rejects_bad_step():
    with pytest.raises(ValueError):
        fd_check(_poly, [0.0, 0.0], h=0.0)
