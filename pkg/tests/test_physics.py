"""Problems, residual operators and losses.

Manufactured solutions get two independent checks: their analytic jets
against finite differences of the closed form, and the residual operator
driven with those jets, which must vanish identically.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fekan.basis import BasisSpec
from fekan.enrich import build_deterministic, identity_map
from fekan.model import FekanModel
from fekan.physics import (
    TargetFunction, allen_cahn, allen_cahn_reference, helmholtz2d,
    helmholtz3d, helmholtz3d_sep, integrate_rk4, klein_gordon,
    klein_gordon_sep, lorenz_pi, lorenz_rhs, lorenz_window_residual,
    pinn_loss, read_reference_csv, relative_l2, sample_collocation,
    separable_pinn_loss, target_eval, write_reference_csv,
)
from fekan.separable import SeparableModel


# -- regression target -------------------------------------------------------

def test_target_values_at_landmarks():
    t = TargetFunction()
    assert target_eval(t, 0.0) == pytest.approx(70.0)
    assert target_eval(t, 0.5) == pytest.approx(30.0, abs=1e-9)
    # independent rewrite of both branch formulas
    x = 0.005
    want = (20.0 * math.sin(2 * math.pi * 350.0 * x)
            + 1.5 * math.sin(2 * math.pi * 6000.0 * x) + 70.0)
    assert target_eval(t, x) == pytest.approx(want, rel=1e-14)
    x = 0.3
    want = 10.0 * math.sin(2 * math.pi * 150.0 * x) + 30.0
    assert target_eval(t, x) == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(st.floats(0.0, 1.0, allow_nan=False))
@settings(max_examples=60, deadline=None)
def test_target_branch_selection(x):
    t = TargetFunction()
    got = float(target_eval(t, x))
    if x < t.breakpoint:
        want = (20.0 * math.sin(2 * math.pi * t.omega1 * x)
                + 1.5 * math.sin(2 * math.pi * t.omega2 * x) + 70.0)
    else:
        want = 10.0 * math.sin(2 * math.pi * t.omega3 * x) + 30.0
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_target_vectorized():
    t = TargetFunction()
    xs = np.array([0.0, 0.005, 0.009999, 0.01, 0.5, 1.0])
    batch = target_eval(t, xs)
    singles = [float(target_eval(t, float(v))) for v in xs]
    np.testing.assert_array_equal(batch, singles)


# -- Lorenz ------------------------------------------------------------------

def test_lorenz_equilibria():
    np.testing.assert_array_equal(lorenz_rhs([0.0, 0.0, 0.0]), np.zeros(3))
    rho, beta = 28.0, 8.0 / 3.0
    c = math.sqrt(beta * (rho - 1.0))
    np.testing.assert_allclose(lorenz_rhs([c, c, rho - 1.0]), np.zeros(3), atol=1e-12)
    np.testing.assert_allclose(lorenz_rhs([-c, -c, rho - 1.0]), np.zeros(3), atol=1e-12)


def test_lorenz_rhs_batched():
    pts = np.random.default_rng(0).standard_normal((5, 3))
    out = lorenz_rhs(pts, sigma=3.0, rho=5.0, beta=1.0)
    assert out.shape == (5, 3)
    for i in range(5):
        np.testing.assert_array_equal(out[i], lorenz_rhs(pts[i], 3.0, 5.0, 1.0))


def test_rk4_exponential_decay():
    traj = integrate_rk4(lambda s: -s, np.array([1.0]), 0.01, 100)
    assert abs(traj[-1, 0] - math.exp(-1.0)) < 1e-8


def test_rk4_order_by_step_halving():
    def err(dt):
        steps = int(round(1.0 / dt))
        traj = integrate_rk4(lambda s: -s, np.array([1.0]), dt, steps)
        return abs(traj[-1, 0] - math.exp(-1.0))

    ratio = err(0.02) / err(0.01)
    assert 12.0 < ratio < 20.0  # fourth order halves to ~1/16


def test_rk4_rejects_bad_dt_and_blowup():
    with pytest.raises(ValueError):
        integrate_rk4(lambda s: s, np.array([1.0]), 0.0, 4)
    with pytest.raises(FloatingPointError):
        integrate_rk4(lambda s: np.array([np.inf]), np.array([1.0]), 0.1, 2)


def test_lorenz_reference_residual_per_window():
    prob = lorenz_pi()
    res = lorenz_window_residual(prob)
    assert len(res) == len(prob.windows) == 8
    assert max(res) < 1e-4


def test_lorenz_jacobian_matches_fd():
    prob = lorenz_pi()
    s = np.array([[1.3, -0.7, 2.1]])
    jac = prob.rhs_jacobian(s)[0]
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (prob.rhs(s + e) - prob.rhs(s - e))[0] / (2 * h)
        np.testing.assert_allclose(jac[:, j], fd, atol=1e-6)


# -- relative error ----------------------------------------------------------

def test_relative_l2_basics():
    e = np.array([3.0, 4.0])
    assert relative_l2(e, e) == 0.0
    assert relative_l2(np.zeros(2), e) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_l2(np.zeros(3), e)
    with pytest.raises(ValueError):
        relative_l2(e, np.zeros(2))


@given(st.floats(-10.0, 10.0, allow_nan=False))
@settings(max_examples=40, deadline=None)
def test_relative_l2_scaling(c):
    e = np.array([1.0, -2.0, 0.5])
    assert relative_l2(c * e, e) == pytest.approx(abs(c - 1.0), abs=1e-12)


# -- manufactured solutions --------------------------------------------------

PROBLEMS = {
    "helmholtz2d": helmholtz2d(),
    "helmholtz3d": helmholtz3d(),
    "klein_gordon": klein_gordon(),
}


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_exact_jets_match_finite_differences(name):
    prob = PROBLEMS[name]
    rng = np.random.default_rng(7)
    x = rng.uniform(prob.lo, prob.hi, size=(40, prob.d))
    v, g, h = prob.exact_jets(x)
    np.testing.assert_allclose(v, prob.exact(x), atol=1e-12)
    eps = 1e-5
    for i in range(prob.d):
        e = np.zeros(prob.d)
        e[i] = eps
        up, dn = prob.exact(x + e), prob.exact(x - e)
        np.testing.assert_allclose(g[:, i], (up - dn) / (2 * eps), rtol=1e-6, atol=1e-5)
        np.testing.assert_allclose(h[:, i], (up - 2 * v + dn) / eps ** 2,
                                   rtol=1e-4, atol=1e-3)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_residual_vanishes_on_exact_solution(name):
    prob = PROBLEMS[name]
    rng = np.random.default_rng(11)
    x = rng.uniform(prob.lo, prob.hi, size=(1000, prob.d))
    v, g, h = prob.exact_jets(x)
    res, _, _, _ = prob.residual(x, v, g, h)
    assert np.abs(res).max() <= 1e-10


def test_separable_exact_grids_match_pointwise():
    for sep, point in ((helmholtz3d_sep(), helmholtz3d()),
                       (klein_gordon_sep(), klein_gordon())):
        grids = sep.grids((5, 6, 7))
        tens = sep.exact_grid(grids)
        mesh = np.meshgrid(*grids, indexing="ij")
        x = np.stack([m.ravel() for m in mesh], axis=1)
        np.testing.assert_allclose(tens.ravel(), point.exact(x), atol=1e-12)


def test_eval_set_shapes():
    x, y = helmholtz2d().eval_set(11)
    assert x.shape == (121, 2) and y.shape == (121,)
    x3, _ = helmholtz3d().eval_set()
    assert x3.shape == (4096, 3)
    x3b, _ = helmholtz3d().eval_set()
    np.testing.assert_array_equal(x3, x3b)
    with pytest.raises(ValueError, match="reference"):
        allen_cahn().eval_set()


# -- collocation sampling ----------------------------------------------------

def test_sampling_is_deterministic_and_in_box():
    prob = helmholtz2d()
    a = sample_collocation(prob, seed=4)
    b = sample_collocation(prob, seed=4)
    np.testing.assert_array_equal(a["res"], b["res"])
    np.testing.assert_array_equal(a["bc"], b["bc"])
    c = sample_collocation(prob, seed=5)
    assert not np.array_equal(a["res"], c["res"])
    assert np.all(a["res"] >= prob.lo) and np.all(a["res"] <= prob.hi)


def test_sampling_centroid_near_box_center():
    prob = helmholtz2d()
    pts = sample_collocation(prob, seed=0, n_res=20000)["res"]
    center = 0.5 * (prob.lo + prob.hi)
    span = prob.hi - prob.lo
    assert np.all(np.abs(pts.mean(axis=0) - center) < 0.01 * span)


def test_sampling_faces_and_ic():
    prob = klein_gordon(n_bc=10, n_ic=6)
    b = sample_collocation(prob, seed=1)
    bc = b["bc"]
    assert bc.shape == (40, 3)  # 4 faces x 10
    for f, (dim, side) in enumerate(prob.bc_faces):
        block = bc[f * 10:(f + 1) * 10]
        want = prob.hi[dim] if side else prob.lo[dim]
        np.testing.assert_array_equal(block[:, dim], want)
    ic = b["ic"]
    assert ic.shape == (6, 3)
    np.testing.assert_array_equal(ic[:, prob.time_dim], 0.0)


def test_sampling_periodic_pairs():
    prob = allen_cahn(n_bc=12)
    left, right = sample_collocation(prob, seed=2)["bc_pairs"]
    np.testing.assert_array_equal(left[:, 0], -1.0)
    np.testing.assert_array_equal(right[:, 0], 1.0)
    np.testing.assert_array_equal(left[:, 1], right[:, 1])


# -- physics-informed loss ---------------------------------------------------

def small_pinn_model(d, seed=0):
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    fmap = build_deterministic([1.0], ndim=d)
    return FekanModel.init([fmap.width, 3, 1], spec, fmap, seed=seed)


def test_residual_loss_matches_hand_assembly():
    prob = helmholtz2d()
    model = small_pinn_model(2)
    x = np.array([[0.1, -0.2], [0.5, 0.5], [-0.9, 0.3], [0.0, 0.0]])
    loss, parts, _ = pinn_loss(model, prob, {"res": x}, lambdas=(1.0, 1.0, 1.0))

    v, g, h = model.forward_jet_batch(x)
    k, a1, a2 = 1.0, 4.0, 4.0
    exact = np.sin(a1 * np.pi * x[:, 0]) * np.sin(a2 * np.pi * x[:, 1])
    q = (k * k - (a1 * a1 + a2 * a2) * np.pi ** 2) * exact
    res = h[:, 0, 0] + h[:, 0, 1] + k * k * v[:, 0] - q
    want = float(np.mean(res ** 2))
    assert parts["l_res"] == pytest.approx(want, rel=1e-12)
    assert loss == pytest.approx(want, rel=1e-12)
    assert parts["l_bc"] == 0.0 and parts["l_ic"] == 0.0


def test_loss_is_weighted_sum_of_parts():
    prob = klein_gordon(n_res=30, n_bc=5, n_ic=8)
    model = small_pinn_model(3)
    batches = sample_collocation(prob, seed=3)
    lam = (2.0, 0.5, 3.0)
    loss, parts, _ = pinn_loss(model, prob, batches, lambdas=lam)
    want = lam[0] * parts["l_res"] + lam[1] * parts["l_bc"] + lam[2] * parts["l_ic"]
    assert loss == pytest.approx(want, rel=1e-12)


def test_zero_weights_zero_gradient():
    prob = helmholtz2d(n_res=20, n_bc=4)
    model = small_pinn_model(2)
    batches = sample_collocation(prob, seed=0)
    loss, _, grads = pinn_loss(model, prob, batches, lambdas=(0.0, 0.0, 0.0))
    assert loss == 0.0
    assert np.all(grads.flatten() == 0.0)


def test_pinn_loss_rejects_vector_output():
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    model = FekanModel.init([2, 3, 2], spec, identity_map(2), seed=0)
    with pytest.raises(ValueError, match="scalar"):
        pinn_loss(model, helmholtz2d(), {"res": np.zeros((3, 2))})


def fd_loss_grad_check(model, loss_fn, picks=6, eps=1e-6, rel=2e-3):
    """Compare analytic loss gradients against central differences on a
    spread of parameter entries; errors are judged relative to the larger
    of the two magnitudes so tiny entries do not dominate."""
    _, _, grads = loss_fn()
    if isinstance(grads, list):
        flat = np.concatenate([g.flatten() for g in grads])
        arrays = [getattr(layer, name)
                  for body in model.bodies for layer in body.layers
                  for name in ("coeff", "base_weight", "tau", "s")
                  if getattr(layer, name, None) is not None]
    else:
        flat = grads.flatten()
        arrays = [getattr(layer, name)
                  for layer in model.layers
                  for name in ("coeff", "base_weight", "tau", "s")
                  if getattr(layer, name, None) is not None]
    offsets = np.cumsum([0] + [a.size for a in arrays])
    total = offsets[-1]
    rng = np.random.default_rng(99)
    idxs = sorted(set(rng.integers(0, total, size=picks).tolist()) | {0, total - 1})
    for flat_idx in idxs:
        which = np.searchsorted(offsets, flat_idx, side="right") - 1
        arr = arrays[which]
        sub = np.unravel_index(flat_idx - offsets[which], arr.shape)
        old = arr[sub]
        arr[sub] = old + eps
        up = loss_fn()[0]
        arr[sub] = old - eps
        dn = loss_fn()[0]
        arr[sub] = old
        fd = (up - dn) / (2 * eps)
        got = flat[flat_idx]
        denom = max(abs(fd), abs(got), 1e-8)
        assert abs(got - fd) / denom < rel, \
            f"param {flat_idx}: analytic {got} vs fd {fd}"


@pytest.mark.parametrize("make", [
    lambda: (helmholtz2d(n_res=40, n_bc=6), 2),
    lambda: (allen_cahn(n_res=40, n_bc=6, n_ic=8), 2),
    lambda: (klein_gordon(n_res=40, n_bc=6, n_ic=8), 3),
])
def test_pinn_loss_gradients_match_fd(make):
    prob, d = make()
    model = small_pinn_model(d, seed=5)
    batches = sample_collocation(prob, seed=8)
    lam = (1.0, 2.0, 1.5)
    fd_loss_grad_check(model, lambda: pinn_loss(model, prob, batches, lambdas=lam))


@pytest.mark.parametrize("which", ["helm", "kg"])
def test_separable_loss_gradients_match_fd(which):
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    fmap = identity_map(1)
    if which == "helm":
        prob = helmholtz3d_sep()
        model = SeparableModel.init(spec, [1, 4, 3], [fmap] * 3, seed=2)
        grids = prob.grids((6, 5, 7))
    else:
        prob = klein_gordon_sep()
        model = SeparableModel.init(spec, [1, 4, 3], [fmap] * 3, seed=2,
                                    affines=[None, None, (5.0, 5.0)])
        grids = prob.grids((5, 6, 7))
    lam = (1.0, 4.0, 2.0)
    fd_loss_grad_check(
        model, lambda: separable_pinn_loss(model, prob, grids, lambdas=lam))


def test_separable_kg_requires_time_grid_from_zero():
    prob = klein_gordon_sep()
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    model = SeparableModel.init(spec, [1, 4, 2], [identity_map(1)] * 3, seed=0)
    grids = prob.grids((4, 4, 5))
    grids[2] = grids[2] + 0.5
    with pytest.raises(ValueError, match="initial condition"):
        separable_pinn_loss(model, prob, grids)


# -- Allen-Cahn reference ----------------------------------------------------

def test_allen_cahn_reference_shape_and_ic():
    times, x, snaps = allen_cahn_reference()
    assert snaps.shape == (101, 256)
    assert times[0] == 0.0 and times[-1] == pytest.approx(1.0)
    np.testing.assert_array_equal(snaps[0], x ** 2 * np.cos(np.pi * x))
    # solutions stay inside the stable wells
    assert np.abs(snaps).max() <= 1.0 + 1e-3


def test_allen_cahn_reference_step_halving():
    _, _, coarse = allen_cahn_reference(n_modes=128, dt=1e-3, save_every=1000)
    _, _, fine = allen_cahn_reference(n_modes=128, dt=5e-4, save_every=2000)
    assert np.abs(coarse[-1] - fine[-1]).max() < 1e-4


def test_reference_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    axes = [np.linspace(0, 1, 3), np.linspace(-1, 1, 4)]
    values = rng.standard_normal((3, 4))
    path = tmp_path / "ref.csv"
    write_reference_csv(path, axes, values)
    axes2, values2 = read_reference_csv(path)
    assert len(axes2) == 2
    np.testing.assert_array_equal(axes2[0], axes[0])
    np.testing.assert_array_equal(axes2[1], axes[1])
    np.testing.assert_array_equal(values2, values)
