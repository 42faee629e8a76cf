import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kronmem.reduction import apply_filter, fit_spatial_pca, reduce_leadfield


def test_rank_one_data():
    rng = np.random.default_rng(0)
    b = np.array([3.0, -1.0, 2.0, 0.5])
    X = np.stack([np.outer(rng.standard_normal(50), b) for _ in range(3)])
    f = fit_spatial_pca(X, 1)
    np.testing.assert_allclose(f.basis[:, 0], b / np.linalg.norm(b), atol=1e-12)
    np.testing.assert_allclose(f.total_inertia, 1.0, atol=1e-12)


def test_full_rank_filter_is_orthogonal(rng):
    X = rng.standard_normal((4, 30, 6))
    f = fit_spatial_pca(X, 6)
    np.testing.assert_allclose(f.total_inertia, 1.0, atol=1e-12)
    np.testing.assert_allclose(f.basis.T @ f.basis, np.eye(6), atol=1e-12)


def test_inertia_matches_dense_eigensolve(rng):
    X = rng.standard_normal((5, 40, 7)) @ rng.standard_normal((7, 7))
    f = fit_spatial_pca(X, 3)
    P = X.reshape(-1, 7)
    P = P - P.mean(axis=0)
    w = np.sort(np.linalg.eigvalsh(np.cov(P.T, bias=True)))[::-1]
    np.testing.assert_allclose(f.inertia, w[:3] / w.sum(), rtol=1e-10)
    assert np.all(np.diff(f.inertia) <= 0)


def test_sign_convention(rng):
    f = fit_spatial_pca(rng.standard_normal((2, 50, 5)), 3)
    for col in f.basis.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_apply_and_leadfield(rng):
    f = fit_spatial_pca(rng.standard_normal((2, 50, 5)), 2)
    M = rng.standard_normal((8, 5))
    np.testing.assert_allclose(apply_filter(M, f), M @ f.basis)
    G0 = rng.standard_normal((5, 11))
    assert reduce_leadfield(G0, f).shape == (2, 11)
    with pytest.raises(ValueError):
        apply_filter(M[:, :4], f)
    with pytest.raises(ValueError):
        reduce_leadfield(G0[:4], f)


def test_bad_arguments(rng):
    with pytest.raises(ValueError):
        fit_spatial_pca(rng.standard_normal((10, 3)), 4)
    with pytest.raises(ValueError):
        fit_spatial_pca(np.ones((10, 3)), 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 6))
def test_projection_is_idempotent(seed, J):
    r = np.random.default_rng(seed)
    f = fit_spatial_pca(r.standard_normal((3, 20, 6)), J)
    P = f.basis @ f.basis.T
    np.testing.assert_allclose(P @ P, P, atol=1e-10)
    assert 0 < f.total_inertia <= 1 + 1e-12
