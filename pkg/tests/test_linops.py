import numpy as np
import pytest

from aspal.core import LinearMap
from aspal.linops import (estimate_spectral_norm, remember_svd, singular_values, sym_eig,
                          thin_svd)


@pytest.mark.parametrize("n", [1, 4, 17])
def test_spectral_norm_identity(n):
    assert estimate_spectral_norm(LinearMap.identity(n)) == pytest.approx(1.0, rel=1e-4)


def test_spectral_norm_diagonal():
    assert estimate_spectral_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0, rel=1e-4)


def test_spectral_norm_zero():
    assert estimate_spectral_norm(np.zeros((3, 4))) == 0.0


def test_spectral_norm_matches_svd(rng):
    M = rng.standard_normal((8, 5))
    est = estimate_spectral_norm(M, tol=1e-10, max_iter=10_000)
    assert est == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)
    # the returned value is |A x| for a unit x, so never above the true norm
    assert est <= np.linalg.norm(M, 2) * (1 + 1e-12)


def test_spectral_norm_reproducible(rng):
    M = rng.standard_normal((6, 6))
    assert estimate_spectral_norm(M, seed=3) == estimate_spectral_norm(M, seed=3)


def test_spectral_norm_bad_args():
    with pytest.raises(ValueError):
        estimate_spectral_norm(np.eye(2), tol=0.0)
    with pytest.raises(ValueError):
        estimate_spectral_norm(np.eye(2), max_iter=0)


def test_sym_eig_identity():
    w, V = sym_eig(np.eye(3))
    np.testing.assert_allclose(w, 1.0)
    np.testing.assert_allclose(V @ V.T, np.eye(3), atol=1e-14)


def test_sym_eig_diagonal():
    w, V = sym_eig(np.diag([2.0, -1.0]))
    np.testing.assert_allclose(w, [2.0, -1.0])
    np.testing.assert_allclose(np.abs(V), np.eye(2))


def test_sym_eig_reconstruction(rng):
    G = rng.standard_normal((5, 5))
    M = G + G.T
    w, V = sym_eig(M)
    assert np.all(np.diff(w) <= 0)
    assert np.linalg.norm((V * w) @ V.T - M) <= 1e-8 * np.linalg.norm(M)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        sym_eig(np.ones((2, 3)))


def test_svd_zero():
    np.testing.assert_array_equal(singular_values(np.zeros((3, 2))), 0.0)


def test_svd_diagonal():
    U, s, V = thin_svd(np.diag([4.0, 3.0]))
    np.testing.assert_allclose(s, [4.0, 3.0])
    np.testing.assert_allclose((U * s) @ V.T, np.diag([4.0, 3.0]), atol=1e-14)


def test_svd_rank_one(rng):
    u = rng.standard_normal(4)
    v = rng.standard_normal(3)
    u *= 2 / np.linalg.norm(u)
    v *= 5 / np.linalg.norm(v)
    s = singular_values(np.outer(u, v))
    assert s[0] == pytest.approx(10.0)
    np.testing.assert_allclose(s[1:], 0.0, atol=1e-12)


def test_svd_reconstruction_and_order(rng):
    M = rng.standard_normal((6, 4))
    U, s, V = thin_svd(M)
    assert U.shape == (6, 4) and V.shape == (4, 4)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_allclose((U * s) @ V.T, M, atol=1e-12)
    np.testing.assert_allclose(s, singular_values(M), rtol=1e-12)


def test_remembered_factorization_only_on_request(rng):
    M = rng.standard_normal((4, 3))
    U, s, V = thin_svd(M)
    remember_svd(M, U[:, :1], s[:1], V[:, :1])
    assert thin_svd(M, allow_truncated=True)[1].size == 1
    assert thin_svd(M)[1].size == 3
    # a different matrix never hits the stored entry
    assert thin_svd(M + 1.0, allow_truncated=True)[1].size == 3
