"""PCA spatial filters for sensor-space dimension reduction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass(frozen=True)
class SpatialFilter:
    """Orthonormal ``J0 x J`` projection basis with captured-inertia bookkeeping.

    Attributes
    ----------
    basis : ndarray, shape (J0, J)
        Principal axes as columns, sorted by decreasing variance.
    inertia : ndarray, shape (J,)
        Fraction of total variance captured by each axis.
    """

    basis: np.ndarray
    inertia: np.ndarray

    @property
    def total_inertia(self):
        return float(np.sum(self.inertia))

    @property
    def n_components(self):
        return self.basis.shape[1]


def fit_spatial_pca(trials, J):
    """Fit the top-``J`` principal axes of sensor vectors pooled over trials and time.

    ``trials`` is an array of shape ``(n_trials, n_times, J0)`` or a single
    ``(n_times, J0)`` matrix.  The pooled mean is removed.  Each axis is
    signed so that its largest-magnitude entry is positive.
    """
    X = np.asarray(trials, dtype=float)
    if X.ndim == 2:
        X = X[None]
    J0 = X.shape[-1]
    if not 1 <= J <= J0:
        raise ValueError(f"J must lie in [1, {J0}], got {J}")
    X = X.reshape(-1, J0)
    X = X - X.mean(axis=0)
    C = X.T @ X / X.shape[0]
    total = np.trace(C)
    if total <= 0:
        raise ValueError("degenerate data: zero variance in every channel")
    w, V = linalg.eigh(C)
    order = np.argsort(w)[::-1][:J]
    w, V = np.clip(w[order], 0.0, None), V[:, order]
    pivot = np.argmax(np.abs(V), axis=0)
    V = V * np.sign(V[pivot, np.arange(J)])
    return SpatialFilter(basis=V, inertia=w / total)


def apply_filter(M, f):
    """Project sensor-space rows onto the filter: ``M @ basis``."""
    M = np.asarray(M, dtype=float)
    if M.shape[-1] != f.basis.shape[0]:
        raise ValueError(f"expected {f.basis.shape[0]} channels, got {M.shape[-1]}")
    return M @ f.basis


def reduce_leadfield(G0, f):
    """Reduced lead-field ``basis.T @ G0`` of shape ``(J, K)``."""
    G0 = np.asarray(G0, dtype=float)
    if G0.shape[0] != f.basis.shape[0]:
        raise ValueError(f"expected {f.basis.shape[0]} sensor rows, got {G0.shape[0]}")
    return f.basis.T @ G0
