"""Tangent-kernel diagnostics against independent linear algebra.

The Jacobi eigensolver is checked against numpy's eigh, the kernel against
an explicit feature Gram for models that are linear in their parameters,
and against a finite-difference Jacobian for ones that are not.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fekan.basis import BasisSpec, eval_stack
from fekan.enrich import identity_map
from fekan.model import FekanModel
from fekan.ntk import (
    MAX_POINTS, Spectrum, acr, eigen_spectrum, ntk_drift, ntk_matrix,
    predicted_error_decay,
)


def random_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    return 0.5 * (a + a.T)


# -- eigensolver ---------------------------------------------------------------

@given(st.integers(1, 12), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_jacobi_matches_eigh(n, seed):
    k = random_symmetric(n, seed)
    spec = eigen_spectrum(k)
    want = np.sort(np.linalg.eigvalsh(k))[::-1]
    scale = max(np.abs(want).max(), 1.0)
    np.testing.assert_allclose(spec.eigenvalues, want, atol=1e-8 * scale)


def test_jacobi_reconstructs_matrix():
    k = random_symmetric(9, 7)
    spec = eigen_spectrum(k)
    q = spec.eigenvectors
    np.testing.assert_allclose(q @ np.diag(spec.eigenvalues) @ q.T, k, atol=1e-10)
    np.testing.assert_allclose(q.T @ q, np.eye(9), atol=1e-10)


def test_spectrum_sorted_descending():
    spec = eigen_spectrum(random_symmetric(8, 3))
    assert np.all(np.diff(spec.eigenvalues) <= 0)


def test_eigen_spectrum_zero_matrix():
    spec = eigen_spectrum(np.zeros((4, 4)))
    np.testing.assert_array_equal(spec.eigenvalues, np.zeros(4))


def test_eigen_spectrum_input_validation():
    with pytest.raises(ValueError, match="square"):
        eigen_spectrum(np.zeros((3, 4)))
    bad = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError, match="symmetric"):
        eigen_spectrum(bad)


def test_acr_is_trace_over_n():
    k = random_symmetric(10, 11)
    spec = eigen_spectrum(k)
    assert acr(spec) == pytest.approx(np.trace(k) / 10, rel=1e-12)
    with pytest.raises(ValueError):
        acr(Spectrum(np.array([])))


# -- kernel ---------------------------------------------------------------------

def linear_model(seed=0):
    """Single layer, so the map is linear in every parameter."""
    spec = BasisSpec.spline(2, 6, -1.0, 1.0)
    return FekanModel.init([1, 1], spec, identity_map(1), seed=seed)


def feature_matrix(model, points):
    """Explicit per-point parameter gradient of a single-layer scalar model,
    laid out exactly like ParamGrads.flatten: coeff rows then base_weight."""
    spec = model.layers[0].spec
    cols = []
    for x in points:
        stack = eval_stack(spec, np.array([x]), order=0)[0][0]
        v = float(x)
        silu = v / (1.0 + np.exp(-v))
        row = list(stack)
        if model.layers[0].base_weight is not None:
            row.append(silu)
        cols.append(row)
    return np.asarray(cols)


def test_linear_model_kernel_is_feature_gram():
    model = linear_model()
    pts = np.linspace(-0.9, 0.9, 7)
    k = ntk_matrix(model, pts)
    phi = feature_matrix(model, pts)
    np.testing.assert_allclose(k, phi @ phi.T, rtol=0, atol=1e-14)


def test_linear_model_kernel_ignores_parameters():
    # the kernel of a parameter-linear model cannot move during training
    a, b = linear_model(seed=0), linear_model(seed=0)
    for _, _, arr in b.params():
        arr += np.random.default_rng(5).standard_normal(arr.shape)
    pts = np.linspace(-0.8, 0.8, 6)
    spectra, dists = ntk_drift([a, b], pts)
    assert dists == [0.0, 0.0]
    np.testing.assert_array_equal(spectra[0].eigenvalues, spectra[1].eigenvalues)
    assert spectra[0].tau == 0 and spectra[1].tau == 1


def test_kernel_symmetric_and_psd():
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    model = FekanModel.init([2, 4, 1], spec, identity_map(2), seed=4)
    pts = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
    k = ntk_matrix(model, pts)
    np.testing.assert_array_equal(k, k.T)
    vals = eigen_spectrum(k).eigenvalues
    assert vals.min() >= -1e-10 * max(vals.max(), 1.0)


def test_kernel_matches_fd_jacobian():
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    model = FekanModel.init([1, 3, 1], spec, identity_map(1), seed=9)
    pts = np.array([-0.6, -0.1, 0.4, 0.8])
    k = ntk_matrix(model, pts)

    arrays = [arr for _, _, arr in model.params()]
    eps = 1e-6
    rows = []
    for x in pts:
        row = []
        for arr in arrays:
            flat = arr.ravel()
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                up = model.forward_batch(np.array([[x]]))[0, 0]
                flat[i] = old - eps
                dn = model.forward_batch(np.array([[x]]))[0, 0]
                flat[i] = old
                row.append((up - dn) / (2 * eps))
        rows.append(row)
    jac = np.asarray(rows)
    np.testing.assert_allclose(k, jac @ jac.T, rtol=1e-5, atol=1e-8)


def test_kernel_input_validation():
    model = linear_model()
    with pytest.raises(ValueError, match="capped"):
        ntk_matrix(model, np.linspace(0, 1, MAX_POINTS + 1))
    spec = BasisSpec.spline(2, 5, -1.0, 1.0)
    vec = FekanModel.init([1, 2], spec, identity_map(1), seed=0)
    with pytest.raises(ValueError, match="scalar"):
        ntk_matrix(vec, np.linspace(0, 1, 4))
    with pytest.raises(ValueError, match="two checkpoints"):
        ntk_drift([model], np.linspace(0, 1, 4))


# -- linearized decay ------------------------------------------------------------

def test_predicted_decay_identity_at_tau_zero():
    k = random_symmetric(6, 13)
    k = k @ k.T  # make it PSD
    y = np.random.default_rng(3).standard_normal(6)
    spec = eigen_spectrum(k)
    got = predicted_error_decay(k, eta=0.5, tau=0.0, y=y)
    np.testing.assert_allclose(got, np.abs(spec.eigenvectors.T @ y), atol=1e-12)


def test_predicted_decay_shrinks_with_tau():
    k = random_symmetric(6, 17)
    k = k @ k.T + 0.1 * np.eye(6)
    y = np.ones(6)
    early = predicted_error_decay(k, eta=0.1, tau=1.0, y=y)
    late = predicted_error_decay(k, eta=0.1, tau=10.0, y=y)
    assert np.all(late <= early + 1e-15)
    with pytest.raises(ValueError):
        predicted_error_decay(k, eta=-1.0, tau=1.0, y=y)
