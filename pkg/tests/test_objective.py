import numpy as np
import pytest

from covrankpy.linalg import commutation_matrix, make_grid, offdiag_mask, vec
from covrankpy.objective import (
    LowRankFactor, aligned_factor, assumption_E_check, grad_psi, hess_psi, hess_psi_kron,
    hessian_nonsingularity_check, psi,
    )
from covrankpy.simmodels import get_model_spec, population_covariance
from covrankpy.utils import DataError


def _random_instance(rng, L, q):
    A = rng.standard_normal((L, L))
    return rng.standard_normal((L, q)), (A + A.T) / 2


def _fd_gradient(C, K, h=1e-6):
    G = np.zeros_like(C)
    for idx in np.ndindex(*C.shape):
        E = np.zeros_like(C)
        E[idx] = h
        G[idx] = (psi(C + E, K) - psi(C - E, K)) / (2 * h)
    return G


def _fd_hessian(C, K, h=1e-6):
    L, q = C.shape
    H = np.zeros((L * q, L * q))
    for col in range(L * q):
        e = np.zeros(L * q)
        e[col] = h
        E = e.reshape((L, q), order="F")
        H[:, col] = vec(grad_psi(C + E, K) - grad_psi(C - E, K)) / (2 * h)
    return H


def test_psi_examples():
    K = np.array([[1.0, 2.0], [2.0, 4.0]])

    assert psi(np.ones((2, 1)), K) == pytest.approx(2.0)
    assert psi(np.zeros((2, 1)), K) == pytest.approx(8.0)

    c = np.array([[1.0], [2.0], [3.0]])
    assert psi(c, c @ c.T + np.diag([5.0, 1.0, 2.0])) == pytest.approx(0.0)


def test_psi_rotation_invariant():
    rng  = np.random.default_rng(2)
    C, K = _random_instance(rng, 6, 3)
    O, _ = np.linalg.qr(rng.standard_normal((3, 3)))

    assert psi(C @ O, K) == pytest.approx(psi(C, K), abs=1e-10)


def test_dimension_mismatch():
    with pytest.raises(DataError):
        psi(np.ones((3, 1)), np.eye(4))

    with pytest.raises(DataError):
        LowRankFactor(np.array([[1.0, np.nan]]))


def test_grad_psi_zero_cases():
    K = np.array([[1.0, 2.0], [2.0, 4.0]])
    np.testing.assert_array_equal(grad_psi(np.zeros((2, 2)), K), np.zeros((2, 2)))

    c = np.array([[1.0], [2.0], [3.0]])
    np.testing.assert_allclose(grad_psi(c, c @ c.T + np.eye(3)), np.zeros((3, 1)), atol=1e-12)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(20240)

    for _ in range(50):
        L    = int(rng.integers(4, 9))
        q    = int(rng.integers(1, 4))
        C, K = _random_instance(rng, L, q)

        G  = grad_psi(C, K)
        np.testing.assert_allclose(G, _fd_gradient(C, K), rtol=1e-5, atol=1e-6 * max(1.0, np.abs(G).max()))

        H = hess_psi(C, K)
        np.testing.assert_allclose(H, _fd_hessian(C, K), rtol=1e-4, atol=1e-5 * max(1.0, np.abs(H).max()))
        np.testing.assert_allclose(H, H.T, atol=1e-10)


def test_hess_psi_at_zero():
    rng = np.random.default_rng(4)
    _, K = _random_instance(rng, 5, 2)

    expected = -4.0 * np.kron(np.eye(2), offdiag_mask(5).apply(K))

    np.testing.assert_allclose(hess_psi(np.zeros((5, 2)), K), expected)
    np.testing.assert_allclose(hess_psi_kron(np.zeros((5, 2)), K), expected)


def test_reduced_hessian_identity_at_aligned_factor():
    K = population_covariance(get_model_spec("A1"), make_grid(25)).entries
    H = aligned_factor(K, 3).entries
    M = commutation_matrix(25, 3)

    reduced = 4.0 * offdiag_mask(75).apply(np.kron(H.T, H) @ M)
    full    = hess_psi_kron(H, K + np.diag(np.linspace(0.5, 1.5, 25)))

    assert np.linalg.norm(full - reduced) <= 1e-8 * np.linalg.norm(full)


def test_exact_hessian_vanishes_along_rotations():
    rng = np.random.default_rng(9)
    C   = rng.standard_normal((9, 3))
    K   = C @ C.T + np.diag(rng.uniform(0.5, 1.0, 9))
    H   = hess_psi(C, K)

    A = np.array([[0.0, 1.0, -2.0], [-1.0, 0.0, 0.5], [2.0, -0.5, 0.0]])

    np.testing.assert_allclose(H @ vec(C @ A), np.zeros(27), atol=1e-9 * np.abs(H).max())
    assert np.linalg.eigvalsh(H).min() >= -1e-9 * np.abs(H).max()


def test_aligned_factor():
    rng = np.random.default_rng(6)
    B   = rng.standard_normal((7, 2))
    H   = aligned_factor(B @ B.T, 2).entries

    np.testing.assert_allclose(H @ H.T, B @ B.T, atol=1e-10)

    gram = H.T @ H
    assert abs(gram[0, 1]) < 1e-10


def test_assumption_E_check():
    ok, offending = assumption_E_check(3.0 * np.ones((3, 3)), 1)
    assert ok and offending == []

    ok, offending = assumption_E_check(np.diag([2.0, 1.0]), 1)
    assert not ok
    assert offending == [(0, 1)]


def test_assumption_E_check_model_A1_grid():
    # t = 13/26 = 1/2 is a zero of sqrt(2) sin(2 pi t), the second eigenvector on this grid
    K = population_covariance(get_model_spec("A1"), make_grid(25))

    ok, offending = assumption_E_check(K, 3)

    assert not ok
    assert (1, 12) in offending

    ok, _ = assumption_E_check(population_covariance(get_model_spec("A1"), make_grid(24)), 2)
    assert ok


def test_hessian_nonsingularity_check():
    c = np.array([1.0, 2.0, 3.0])

    np.testing.assert_allclose(hess_psi(c, np.outer(c, c)), 4.0 * np.array([[13, 2, 3], [2, 10, 6], [3, 6, 5]]))

    ok, s_min = hessian_nonsingularity_check(c, np.outer(c, c))
    assert ok and s_min > 0

    ok, s_min = hessian_nonsingularity_check(np.zeros((4, 1)), np.eye(4))
    assert not ok
    assert s_min == 0.0


def test_hessian_nonsingularity_at_model_factor():
    K = population_covariance(get_model_spec("A1"), make_grid(25))
    H = aligned_factor(K, 3)

    ok, _ = hessian_nonsingularity_check(H, K)
    assert ok

    # unprojected, the rotation directions make the exact Hessian singular
    s = np.linalg.svd(hess_psi(H, K), compute_uv=False)
    assert s.min() <= 1e-8 * s.max()


def test_hessian_check_rejects_unknown_form():
    with pytest.raises(DataError):
        hessian_nonsingularity_check(np.ones((3, 1)), np.eye(3), form="newton")
