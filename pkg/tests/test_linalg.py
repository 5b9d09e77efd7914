import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covnorm.errors import DimensionError, InputError, RankDeficiencyError
from covnorm.linalg import least_squares, psd_eig, svd, sym_eig


def random_symmetric(d, seed):
    a = np.random.default_rng(seed).normal(size=(d, d))
    return a + a.T


@given(st.integers(1, 24), st.integers(0, 2**31 - 1))
@settings(max_examples=60)
def test_sym_eig_reconstructs_and_is_orthonormal(d, seed):
    a = random_symmetric(d, seed)
    eig = sym_eig(a)
    v = eig.eigenvectors
    assert np.max(np.abs(eig.reconstruct() - a)) < 1e-10 * max(1.0, np.max(np.abs(a)))
    assert np.max(np.abs(v.T @ v - np.eye(d))) < 1e-10
    assert np.all(np.diff(eig.eigenvalues) <= 0.0)


@given(st.integers(1, 16), st.integers(0, 2**31 - 1))
@settings(max_examples=30)
def test_sym_eig_matches_lapack(d, seed):
    a = random_symmetric(d, seed)
    ref = np.linalg.eigvalsh(a)[::-1]
    assert np.allclose(sym_eig(a).eigenvalues, ref, atol=1e-10 * max(1.0, np.abs(ref).max()))


def test_sym_eig_hand_example():
    eig = sym_eig([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(eig.eigenvalues, [3.0, 1.0])
    s = 1.0 / np.sqrt(2.0)
    assert np.allclose(eig.eigenvectors, [[s, s], [s, -s]])


def test_sym_eig_sign_convention():
    vecs = sym_eig(random_symmetric(7, 3)).eigenvectors
    for j in range(7):
        col = vecs[:, j]
        assert col[np.argmax(np.abs(col))] > 0.0


def test_sym_eig_diagonal_input_is_identity_basis():
    eig = sym_eig(np.diag([1.0, 5.0, 3.0]))
    assert np.array_equal(eig.eigenvalues, [5.0, 3.0, 1.0])
    assert np.array_equal(np.abs(eig.eigenvectors), np.eye(3)[:, [1, 2, 0]])


@pytest.mark.parametrize(
    "bad, err",
    [
        (np.ones((2, 3)), DimensionError),
        ([[1.0, 2.0], [0.0, 1.0]], InputError),
        ([[np.nan, 0.0], [0.0, 1.0]], InputError),
    ],
)
def test_sym_eig_rejects(bad, err):
    with pytest.raises(err):
        sym_eig(bad)


def test_psd_eig_clamps_roundoff_and_rejects_negative():
    q = np.linalg.qr(np.random.default_rng(0).normal(size=(4, 4)))[0]
    near = (q * np.array([1.0, 0.5, 0.0, -1e-14])) @ q.T
    assert np.all(psd_eig(near).eigenvalues >= 0.0)
    with pytest.raises(InputError):
        psd_eig(np.diag([1.0, -0.1]))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
@settings(max_examples=50)
def test_svd_reconstructs(m, n, seed):
    a = np.random.default_rng(seed).normal(size=(m, n))
    dec = svd(a)
    k = min(m, n)
    assert dec.u.shape == (m, k) and dec.v.shape == (n, k)
    assert np.max(np.abs(dec.reconstruct() - a)) < 1e-10
    assert np.max(np.abs(dec.u.T @ dec.u - np.eye(k))) < 1e-10
    assert np.max(np.abs(dec.v.T @ dec.v - np.eye(k))) < 1e-10
    assert np.allclose(dec.singular_values, np.linalg.svd(a, compute_uv=False), atol=1e-10)


def test_svd_rank_deficient_keeps_orthonormal_u():
    a = np.outer([1.0, 2.0, 3.0], [1.0, -1.0, 0.5])
    dec = svd(a)
    assert np.allclose(dec.singular_values[1:], 0.0, atol=1e-12)
    assert np.allclose(dec.u.T @ dec.u, np.eye(3), atol=1e-10)
    assert np.allclose(dec.reconstruct(), a, atol=1e-12)


def test_least_squares_exact_and_ridge():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(3, 50))
    m_true = rng.normal(size=(4, 3))
    assert np.allclose(least_squares(z, m_true @ z), m_true, atol=1e-12)
    shrunk = least_squares(z, m_true @ z, ridge=10.0)
    assert np.linalg.norm(shrunk) < np.linalg.norm(m_true)


def test_least_squares_singular_needs_ridge():
    z = np.vstack([np.ones(5), np.ones(5)])
    with pytest.raises(RankDeficiencyError):
        least_squares(z, z)
    least_squares(z, z, ridge=1e-3)
    with pytest.raises(InputError):
        least_squares(z, z, ridge=-1.0)
