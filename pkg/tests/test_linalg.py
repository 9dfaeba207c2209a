import numpy as np
import pytest

from covrankpy.linalg import (
    CovMatrix, Grid, SampleMatrix, commutation_matrix, empirical_covariance, make_grid,
    masked_frobenius_sq, offdiag_mask, procrustes_align, psd_clip, psd_sqrt, sym_eigendecomposition, vec,
    )
from covrankpy.utils import DataError


def test_offdiag_mask_small():
    np.testing.assert_array_equal(offdiag_mask(2).dense(), [[0, 1], [1, 0]])
    assert offdiag_mask(3).dense().sum() == 6


@pytest.mark.parametrize("m", range(2, 9))
def test_mask_determinant(m):
    mask = offdiag_mask(m)
    assert mask.det == (m - 1) * (-1) ** (m - 1)
    assert np.linalg.det(mask.dense()) == pytest.approx(mask.det)


def test_mask_apply_zeroes_only_the_diagonal():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 4))

    out = offdiag_mask(4).apply(A)

    np.testing.assert_array_equal(np.diag(out), np.zeros(4))
    np.testing.assert_array_equal(out - np.diag(np.diag(out)), A - np.diag(np.diag(A)))

    with pytest.raises(DataError):
        offdiag_mask(3).apply(A)


def test_masked_frobenius_sq():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    B = np.array([[9.0, 1.0], [5.0, 9.0]])

    assert masked_frobenius_sq(A, B) == pytest.approx(5.0)
    assert masked_frobenius_sq(B, A) == pytest.approx(5.0)
    assert masked_frobenius_sq(A, A) == 0.0
    assert masked_frobenius_sq(A, A + np.diag([3.0, -2.0])) == 0.0

    with pytest.raises(DataError):
        masked_frobenius_sq(A, np.eye(3))


def test_commutation_matrix():
    np.testing.assert_array_equal(commutation_matrix(1, 1), [[1.0]])

    # vec order (R11, R21, R12, R22) -> (R11, R12, R21, R22)
    M = commutation_matrix(2, 2)
    np.testing.assert_array_equal(M @ np.arange(4), [0, 2, 1, 3])

    rng = np.random.default_rng(11)
    R = rng.standard_normal((4, 2))
    M = commutation_matrix(4, 2)

    np.testing.assert_allclose(M @ vec(R), vec(R.T))
    np.testing.assert_array_equal(M.sum(axis=0), np.ones(8))
    np.testing.assert_array_equal(M.sum(axis=1), np.ones(8))
    np.testing.assert_array_equal(commutation_matrix(2, 4) @ M, np.eye(8))


def test_sym_eigendecomposition():
    w, V = sym_eigendecomposition(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1])

    w, V = sym_eigendecomposition(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(w, [3, 1])
    np.testing.assert_allclose(np.abs(V), [[0, 1], [1, 0]])

    c = np.array([1.0, 2.0])
    w, V = sym_eigendecomposition(np.outer(c, c))
    np.testing.assert_allclose(w, [5, 0], atol=1e-12)

    rng = np.random.default_rng(5)
    A = rng.standard_normal((6, 6))
    K = A @ A.T

    w, V = sym_eigendecomposition(K)

    assert np.all(np.diff(w) <= 0)
    np.testing.assert_allclose((V * w) @ V.T, K, atol=1e-10 * np.abs(K).max())
    np.testing.assert_allclose(V.T @ V, np.eye(6), atol=1e-10)

    # largest-magnitude entry of each eigenvector is positive
    pivots = V[np.argmax(np.abs(V), axis=0), np.arange(6)]
    assert np.all(pivots > 0)


def test_sym_eigendecomposition_rejects_non_finite():
    with pytest.raises(DataError):
        sym_eigendecomposition(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_psd_clip_and_sqrt():
    v1 = np.array([1.0, 1.0]) / np.sqrt(2)
    v2 = np.array([1.0, -1.0]) / np.sqrt(2)
    K  = 4 * np.outer(v1, v1) - np.outer(v2, v2)

    np.testing.assert_allclose(psd_clip(K), 4 * np.outer(v1, v1), atol=1e-12)

    S = psd_sqrt(K)
    np.testing.assert_allclose(S @ S, 4 * np.outer(v1, v1), atol=1e-12)


def test_procrustes_align():
    rng = np.random.default_rng(21)
    C0  = rng.standard_normal((5, 2))

    np.testing.assert_allclose(procrustes_align(C0, C0), C0, atol=1e-12)

    O, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    np.testing.assert_allclose(procrustes_align(C0 @ O, C0), C0, atol=1e-10)

    C       = rng.standard_normal((5, 2))
    aligned = procrustes_align(C, C0)
    best    = np.linalg.norm(aligned - C0)

    # no random rotation or reflection does better
    for _ in range(2000):
        Q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        assert np.linalg.norm(C @ Q - C0) >= best - 1e-10

    np.testing.assert_allclose(procrustes_align(aligned, C0), aligned, atol=1e-10)


def test_empirical_covariance():
    w = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(empirical_covariance(w, center=False).entries, np.outer(w[0], w[0]))

    same = SampleMatrix(np.tile([1.0, -2.0, 0.5], (4, 1)))
    np.testing.assert_allclose(empirical_covariance(same).entries, np.zeros((3, 3)), atol=1e-15)

    two = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(empirical_covariance(two).entries, [[0.25, -0.25], [-0.25, 0.25]])

    with pytest.raises(DataError):
        empirical_covariance(w, center=True)


def test_empirical_covariance_is_psd():
    rng = np.random.default_rng(8)
    K   = empirical_covariance(rng.standard_normal((5, 9))).entries

    assert np.linalg.eigvalsh(K).min() >= -1e-10


def test_two_node_grid():
    assert len(Grid([0.2, 0.8])) == 2
    assert SampleMatrix(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])).L == 2

    with pytest.raises(DataError):
        Grid([0.5])


def test_domain_types_validate():
    with pytest.raises(DataError):
        Grid([0.2, 0.1, 0.5])

    with pytest.raises(DataError):
        Grid([0.1, 1.5])

    with pytest.raises(DataError):
        SampleMatrix(np.ones((1, 3)))

    with pytest.raises(DataError, match="row 2, column 3"):
        SampleMatrix(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, np.inf]]))

    with pytest.raises(DataError):
        CovMatrix(np.eye(3), grid=make_grid(4))

    K = CovMatrix([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(K.entries, [[1.0, 1.0], [1.0, 1.0]])


def test_make_grid():
    np.testing.assert_allclose(make_grid(4).nodes, [0.2, 0.4, 0.6, 0.8])
    np.testing.assert_allclose(SampleMatrix(np.zeros((2, 4))).grid.nodes, make_grid(4).nodes)
