"""Dense and Kronecker-product matrix algebra.

Vectorization convention used throughout the package: a matrix ``M`` of
shape (L, J) is flattened by stacking its rows, so entry ``(l, j)`` lands at
position ``l * J + j``.  This is ``vec(M.T)`` in column-stacking notation and
is exactly ``M.ravel()`` for C-ordered numpy arrays.  Under this convention

    (A kron B) @ vec(M) == vec(A @ M @ B.T)

which lets every Kronecker covariance be applied without materializing it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

SYMMETRY_RTOL = 1e-12


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a matrix expected to be symmetric positive definite is not."""


def vec(M):
    """Row-stacking vectorization of a 2-D array."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"vec expects a 2-D array, got shape {M.shape}")
    return M.reshape(-1).copy()


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot reshape length {v.size} into ({rows}, {cols})")
    return v.reshape(rows, cols).copy()


def _check_square(A, name):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")


def kron_apply(A, B, M):
    """Apply ``A kron B`` to ``vec(M)`` in matrix form, i.e. return ``A @ M @ B.T``."""
    A, B, M = (np.asarray(x, dtype=float) for x in (A, B, M))
    _check_square(A, "A")
    _check_square(B, "B")
    if M.shape != (A.shape[0], B.shape[0]):
        raise ValueError(
            f"M has shape {M.shape}, expected ({A.shape[0]}, {B.shape[0]})"
        )
    return A @ M @ B.T


def trace_quad(U, A, B):
    """Return ``Tr(U.T @ A @ U @ B)``.

    For symmetric ``A`` and ``B`` this equals ``vec(U) @ (A kron B) @ vec(U)``.
    """
    U, A, B = (np.asarray(x, dtype=float) for x in (U, A, B))
    _check_square(A, "A")
    _check_square(B, "B")
    if U.shape != (A.shape[0], B.shape[0]):
        raise ValueError(
            f"U has shape {U.shape}, expected ({A.shape[0]}, {B.shape[0]})"
        )
    return float(np.sum(U * (A @ U @ B.T)))


def is_symmetric(S, rtol=SYMMETRY_RTOL):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        return False
    scale = max(np.max(np.abs(S)), np.finfo(float).tiny) if S.size else 1.0
    return bool(np.max(np.abs(S - S.T), initial=0.0) <= rtol * scale)


def check_spd(S, name="matrix"):
    """Validate and return a symmetric positive-definite matrix.

    Symmetry is checked to a relative tolerance of 1e-12 and positive
    definiteness through a Cholesky factorization.  The returned array is
    exactly symmetrized.
    """
    S = np.asarray(S, dtype=float)
    if not is_symmetric(S):
        raise NotSPDError(f"{name} is not symmetric")
    if not np.all(np.isfinite(S)):
        raise NotSPDError(f"{name} has non-finite entries")
    S = 0.5 * (S + S.T)
    try:
        linalg.cholesky(S, lower=True)
    except linalg.LinAlgError as exc:
        raise NotSPDError(f"{name} is not positive definite") from exc
    return S


def cholesky_factor(S, name="matrix"):
    """Lower Cholesky factor of an SPD matrix; raises :class:`NotSPDError`."""
    S = check_spd(S, name)
    return linalg.cholesky(S, lower=True)


def logdet_spd(S):
    C = cholesky_factor(S)
    return 2.0 * float(np.sum(np.log(np.diag(C))))


def matrix_exp(S):
    """Matrix exponential of a symmetric matrix by eigendecomposition."""
    S = np.asarray(S, dtype=float)
    if not is_symmetric(S):
        raise ValueError("matrix_exp expects a symmetric matrix")
    S = 0.5 * (S + S.T)
    w, V = linalg.eigh(S)
    E = (V * np.exp(w)) @ V.T
    return 0.5 * (E + E.T)


@dataclass(frozen=True)
class KroneckerCovariance:
    """Covariance ``temporal kron spatial`` of a matrix-normal law.

    The pair ``(c * temporal, spatial / c)`` describes the same covariance;
    with ``normalization="trace"`` the representative with
    ``trace(temporal) == L`` is stored.  ``normalization="none"`` keeps the
    factors as given.
    """

    temporal: np.ndarray
    spatial: np.ndarray
    normalization: str = "trace"

    def __post_init__(self):
        t = check_spd(self.temporal, "temporal factor")
        s = check_spd(self.spatial, "spatial factor")
        if self.normalization == "trace":
            c = t.shape[0] / np.trace(t)
            t, s = t * c, s / c
        elif self.normalization != "none":
            raise ValueError(f"unknown normalization {self.normalization!r}")
        t.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "temporal", t)
        object.__setattr__(self, "spatial", s)

    @property
    def shape(self):
        return self.temporal.shape[0], self.spatial.shape[0]

    def dense(self):
        """Explicit ``L*J x L*J`` matrix (small problems and tests only)."""
        return np.kron(self.temporal, self.spatial)

    def scaled(self, c):
        """Covariance multiplied by ``c > 0``; the scale goes on the spatial factor."""
        if c <= 0:
            raise ValueError("scale must be positive")
        return KroneckerCovariance(self.temporal, self.spatial * c, self.normalization)


def sample_matrix_normal(mean, cov, rng, _standard=None):
    """Draw one ``L x J`` matrix-normal sample ``mean + Ct @ Z @ Cs.T``.

    ``Ct`` and ``Cs`` are the lower Cholesky factors of the temporal and
    spatial covariance factors.  ``_standard`` replaces the standard-normal
    draw ``Z`` (test hook).
    """
    mean = np.asarray(mean, dtype=float)
    L, J = cov.shape
    if mean.shape != (L, J):
        raise ValueError(f"mean has shape {mean.shape}, expected {(L, J)}")
    Ct = cholesky_factor(cov.temporal, "temporal factor")
    Cs = cholesky_factor(cov.spatial, "spatial factor")
    Z = rng.standard_normal((L, J)) if _standard is None else np.asarray(_standard, float)
    return mean + Ct @ Z @ Cs.T
