"""Kronecker-factored covariance estimation (flip-flop) and SPD shrinkage."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import KroneckerCovariance, NotSPDError, check_spd, logdet_spd


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class FlipFlopInfo:
    iterations: int
    converged: bool
    loglik_trace: list = field(default_factory=list)


def _as_samples(samples):
    N = np.asarray(samples, dtype=float)
    if N.ndim != 3:
        raise ValueError(f"samples must have shape (n, L, J), got {N.shape}")
    return N


def loglik_kron(samples, temporal, spatial):
    """Matrix-normal log-likelihood of zero-mean samples, summed over samples.

    Includes the Gaussian normalizing constant ``-(n*L*J/2) * log(2*pi)`` so
    that for ``L = J = 1`` it is the ordinary scalar Gaussian log-density.
    """
    N = _as_samples(samples)
    n, L, J = N.shape
    St = check_spd(temporal, "temporal factor")
    Ss = check_spd(spatial, "spatial factor")
    ct = linalg.cho_factor(St, lower=True)
    cs = linalg.cho_factor(Ss, lower=True)
    quad = 0.0
    for Ni in N:
        quad += np.sum(linalg.cho_solve(ct, Ni) * linalg.cho_solve(cs, Ni.T).T)
    return float(
        -0.5 * n * L * J * np.log(2.0 * np.pi)
        - 0.5 * n * (J * logdet_spd(St) + L * logdet_spd(Ss))
        - 0.5 * quad
    )


def _half_step(N, other, normalizer, name):
    """``(1/normalizer) * sum_i N_i @ inv(other) @ N_i.T`` with a fixed summation order."""
    try:
        c = linalg.cho_factor(other, lower=True)
    except linalg.LinAlgError as exc:
        raise NotSPDError(f"{name} became singular during flip-flop") from exc
    acc = np.zeros((N.shape[1], N.shape[1]))
    for Ni in N:
        acc += Ni @ linalg.cho_solve(c, Ni.T)
    acc /= normalizer
    return 0.5 * (acc + acc.T)


def flip_flop(samples, tol=1e-8, max_iter=100, return_info=False):
    """Maximum-likelihood Kronecker covariance of centered ``L x J`` samples.

    Alternates the temporal and spatial closed-form updates starting from an
    identity spatial factor, renormalizing to ``trace(temporal) == L`` after
    every sweep.  Iteration stops once the relative Frobenius change of both
    factors drops below ``tol``.  A :class:`ConvergenceWarning` is emitted if
    ``max_iter`` sweeps are not enough; the last iterate is returned.

    Raises :class:`~kronmem.core.NotSPDError` when an intermediate factor is
    singular, which happens with too few or degenerate samples.
    """
    N = _as_samples(samples)
    n, L, J = N.shape
    if n < 2:
        raise ValueError("flip-flop needs at least two samples")
    if n * J <= L or n * L <= J:
        raise ValueError(f"not identifiable: n={n}, L={L}, J={J}")

    St = np.eye(L)
    Ss = np.eye(J)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        St_new = _half_step(N, Ss, n * J, "spatial factor")
        trace.append(_loglik_or_raise(N, St_new, Ss, "temporal factor"))
        Ss_new = _half_step(N.transpose(0, 2, 1), St_new, n * L, "temporal factor")
        trace.append(_loglik_or_raise(N, St_new, Ss_new, "spatial factor"))
        c = L / np.trace(St_new)
        St_new, Ss_new = St_new * c, Ss_new / c
        dt = linalg.norm(St_new - St) / linalg.norm(St_new)
        ds = linalg.norm(Ss_new - Ss) / linalg.norm(Ss_new)
        St, Ss = St_new, Ss_new
        if dt < tol and ds < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"flip-flop did not converge in {max_iter} iterations", ConvergenceWarning
        )
    cov = KroneckerCovariance(St, Ss)
    if return_info:
        return cov, FlipFlopInfo(iterations=it, converged=converged, loglik_trace=trace)
    return cov


def _loglik_or_raise(N, St, Ss, name):
    try:
        return loglik_kron(N, St, Ss)
    except NotSPDError as exc:
        raise NotSPDError(
            f"{name} became singular during flip-flop (too few or degenerate samples)"
        ) from exc


def regularize_spd(S, gamma):
    """Shrink ``S`` toward ``(Tr(S)/dim) * I`` with weight ``gamma``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    S = np.asarray(S, dtype=float)
    S = 0.5 * (S + S.T)
    dim = S.shape[0]
    return (1.0 - gamma) * S + gamma * (np.trace(S) / dim) * np.eye(dim)
