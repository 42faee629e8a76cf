import warnings

import numpy as np
import pytest
from scipy import stats

from kronmem.core import KroneckerCovariance, NotSPDError, sample_matrix_normal, vec
from kronmem.covariance import ConvergenceWarning, flip_flop, loglik_kron, regularize_spd

from conftest import random_spd


def _normalized(S):
    return S * S.shape[0] / np.trace(S)


def _draw(rng, cov, n):
    L, J = cov.shape
    return np.stack([sample_matrix_normal(np.zeros((L, J)), cov, rng) for _ in range(n)])


def test_factor_recovery():
    rng = np.random.default_rng(3)
    St0, Ss0 = random_spd(rng, 8, 20.0), random_spd(rng, 6, 20.0)
    N = _draw(rng, KroneckerCovariance(St0, Ss0), 500)
    cov, info = flip_flop(N, return_info=True)
    assert info.converged
    tru = KroneckerCovariance(St0, Ss0)
    for est, ref in [(cov.temporal, tru.temporal), (cov.spatial, tru.spatial)]:
        assert np.linalg.norm(est - ref) / np.linalg.norm(ref) < 0.05


def test_white_noise_gives_identity():
    rng = np.random.default_rng(4)
    cov = flip_flop(rng.standard_normal((2000, 5, 4)))
    assert np.linalg.norm(cov.temporal - np.eye(5)) / np.sqrt(5) < 0.05
    assert np.linalg.norm(cov.spatial - np.eye(4)) / 2 < 0.05


def test_degenerate_samples_raise():
    M = np.outer([1.0, 2.0, 3.0], [1.0, -1.0, 0.5])
    with pytest.raises(NotSPDError):
        flip_flop(np.stack([M] * 10))


def test_argument_checks():
    with pytest.raises(ValueError):
        flip_flop(np.zeros((1, 3, 3)))
    with pytest.raises(ValueError):
        flip_flop(np.zeros((3, 3)))


def test_loglik_monotone_across_half_steps(rng):
    N = _draw(rng, KroneckerCovariance(random_spd(rng, 5), random_spd(rng, 4)), 30)
    _, info = flip_flop(N, return_info=True)
    tr = np.asarray(info.loglik_trace)
    assert np.all(np.diff(tr) >= -1e-9 * np.abs(tr[1:]))


def test_convergence_warning(rng):
    N = _draw(rng, KroneckerCovariance(random_spd(rng, 5), random_spd(rng, 4)), 30)
    with pytest.warns(ConvergenceWarning):
        _, info = flip_flop(N, max_iter=1, return_info=True)
    assert not info.converged


def test_flip_flop_is_stationary_point(rng):
    """Neither factor update changes the returned estimate."""
    N = _draw(rng, KroneckerCovariance(random_spd(rng, 4), random_spd(rng, 3)), 40)
    cov = flip_flop(N, tol=1e-12, max_iter=500)
    n, L, J = N.shape
    St = sum(Ni @ np.linalg.solve(cov.spatial, Ni.T) for Ni in N) / (n * J)
    np.testing.assert_allclose(St, cov.temporal, rtol=1e-8, atol=1e-10)


def test_loglik_scalar_case():
    x, s2 = 0.7, 2.3
    val = loglik_kron(np.array([[[x]]]), np.array([[1.0]]), np.array([[s2]]))
    np.testing.assert_allclose(val, stats.norm(0, np.sqrt(s2)).logpdf(x), rtol=1e-13)


def test_loglik_matches_dense_gaussian(rng):
    St, Ss = random_spd(rng, 3), random_spd(rng, 2)
    N = rng.standard_normal((4, 3, 2))
    dense = stats.multivariate_normal(np.zeros(6), np.kron(St, Ss))
    expected = sum(dense.logpdf(vec(Ni)) for Ni in N)
    np.testing.assert_allclose(loglik_kron(N, St, Ss), expected, rtol=1e-12)


def test_loglik_scale_invariance(rng):
    St, Ss = random_spd(rng, 3), random_spd(rng, 2)
    N = rng.standard_normal((4, 3, 2))
    np.testing.assert_allclose(loglik_kron(N, 3.0 * St, Ss / 3.0), loglik_kron(N, St, Ss),
                               rtol=1e-12)


def test_regularize_spd_examples(rng):
    S = random_spd(rng, 4)
    np.testing.assert_allclose(regularize_spd(S, 0.0), S)
    np.testing.assert_allclose(regularize_spd(S, 1.0), np.trace(S) / 4 * np.eye(4))
    R = regularize_spd(np.diag([1.0, 0.0]), 0.1)
    np.testing.assert_allclose(R, np.diag([0.95, 0.05]))
    assert np.all(np.linalg.eigvalsh(R) > 0)
    with pytest.raises(ValueError):
        regularize_spd(S, 1.5)


def test_no_warning_when_converged(rng):
    N = _draw(rng, KroneckerCovariance(random_spd(rng, 4), random_spd(rng, 3)), 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        flip_flop(N)
