"""Empirical neural tangent kernel: Gram matrix, spectra, drift, decay.

The kernel is built from exact per-point parameter gradients, so it is as
accurate as the reverse pass itself. Spectra come from a cyclic Jacobi
eigensolver; sample sets are capped at 128 points, which keeps the dense
Gram and the O(N^3) sweeps trivial on one core.
"""

from __future__ import annotations

import numpy as np

from .model import FekanModel

__all__ = ["ntk_matrix", "eigen_spectrum", "acr", "ntk_drift",
           "predicted_error_decay", "Spectrum", "MAX_POINTS"]

MAX_POINTS = 128


class Spectrum:
    """Eigenvalues sorted descending, with the matching eigenvectors as
    columns when requested."""

    def __init__(self, eigenvalues, eigenvectors=None, tau=None):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvectors = eigenvectors
        self.tau = tau

    def __len__(self):
        return len(self.eigenvalues)


def ntk_matrix(model: FekanModel, points: np.ndarray) -> np.ndarray:
    """K[i, j] = <grad_theta f(x_i), grad_theta f(x_j)> for a scalar model."""
    if model.out_dim != 1:
        raise ValueError("tangent kernel is defined here for scalar-output models only")
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n > MAX_POINTS:
        raise ValueError(f"point set capped at {MAX_POINTS}, got {n}")
    rows = [model.backward(x[i]).flatten() for i in range(n)]
    jac = np.stack(rows, axis=0)
    return jac @ jac.T


def _off_norm(a):
    return np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))


def eigen_spectrum(k: np.ndarray, tau=None, tol_factor: float = 1e-10) -> Spectrum:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps run until the off-diagonal Frobenius mass falls below
    1e-12 * ||K||_F. Asymmetry beyond tol_factor * ||K||_F is an error.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("need a square matrix")
    norm = np.linalg.norm(k)
    if np.linalg.norm(k - k.T) > max(tol_factor * norm, 1e-300):
        raise ValueError("matrix is not symmetric within tolerance")
    n = k.shape[0]
    a = 0.5 * (k + k.T)
    q = np.eye(n)
    target = 1e-12 * max(norm, 1e-300)
    for _ in range(100):
        if _off_norm(a) < target:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if abs(apr) < 1e-300:
                    continue
                theta = (a[r, r] - a[p, p]) / (2.0 * apr)
                if abs(theta) > 1e150:  # theta^2 would overflow; use the limit
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                    if theta == 0.0:
                        t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, r]
                rot_r = s * a[:, p] + c * a[:, r]
                a[:, p], a[:, r] = rot_p, rot_r
                rot_p = c * a[p, :] - s * a[r, :]
                rot_r = s * a[p, :] + c * a[r, :]
                a[p, :], a[r, :] = rot_p, rot_r
                rot_p = c * q[:, p] - s * q[:, r]
                rot_r = s * q[:, p] + c * q[:, r]
                q[:, p], q[:, r] = rot_p, rot_r
    vals = np.diag(a).copy()
    order = np.argsort(vals)[::-1]
    return Spectrum(vals[order], q[:, order], tau=tau)


def acr(spectrum: Spectrum) -> float:
    """Average convergence rate: the mean eigenvalue, identically trace/N."""
    if len(spectrum) == 0:
        raise ValueError("empty spectrum")
    return float(spectrum.eigenvalues.mean())


def ntk_drift(models, points):
    """Spectra of the kernel at each checkpoint plus the Frobenius distance
    of each kernel to the final one."""
    if len(models) < 2:
        raise ValueError("need at least two checkpoints")
    kernels = [ntk_matrix(m, points) for m in models]
    spectra = [eigen_spectrum(k, tau=i) for i, k in enumerate(kernels)]
    final = kernels[-1]
    dists = [float(np.linalg.norm(k - final)) for k in kernels]
    return spectra, dists


def predicted_error_decay(k: np.ndarray, eta: float, tau: float, y: np.ndarray):
    """Linearized-training prediction: the error component along eigenvector
    i decays as exp(-eta * lambda_i * tau) from its initial size."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    spec = eigen_spectrum(k)
    qty = spec.eigenvectors.T @ np.asarray(y, dtype=float)
    return np.exp(-eta * spec.eigenvalues * tau) * np.abs(qty)
