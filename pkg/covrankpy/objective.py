import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from covrankpy import utils
from covrankpy.linalg import (
    CovMatrix, _as_matrix, commutation_matrix, masked_frobenius_sq,
    offdiag_mask, sym_eigendecomposition, vec,
    )
from covrankpy.utils import DataError

logger = logging.getLogger(__name__)

__all__ = [
    "LowRankFactor", "psi", "grad_psi", "hess_psi", "hess_psi_kron",
    "aligned_factor", "assumption_E_check", "hessian_nonsingularity_check",
    ]


@dataclass(frozen=True)
class LowRankFactor:
    """L x q factor C of a rank <= q matrix CC^T"""

    entries: np.ndarray

    def __post_init__(self):
        C = np.array(self.entries, dtype=float)

        if C.ndim == 1:
            C = C[:, None]

        if C.ndim != 2 or C.shape[1] < 1:
            raise DataError(f"A factor must be an L x q matrix with q >= 1, got shape {C.shape}")

        if not np.all(np.isfinite(C)):
            raise DataError("Factor entries must be finite")

        C.setflags(write=False)
        object.__setattr__(self, "entries", C)

    @property
    def L(self):
        return self.entries.shape[0]

    @property
    def q(self):
        return self.entries.shape[1]

    def gram(self):
        """The rank <= q matrix CC^T"""
        return self.entries @ self.entries.T


def _factor_and_cov(
    C = None,
    K = None
    ):
    """Validated (C, K) ndarray pair with matching row counts"""

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    C = C.entries if isinstance(C, LowRankFactor) else LowRankFactor(C).entries
    K = _as_matrix(K)

    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != C.shape[0]:
        raise DataError(f"Dimension mismatch: factor {C.shape} vs covariance {K.shape}")

    return C, K


def psi(
    C = None,
    K = None
    ):
    """Masked low-rank objective ||P_L o (K - CC^T)||_F^2

    Args:
        C (LowRankFactor, ndarray): L x q factor. Defaults to None.
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.

    Returns:
        float: off-diagonal squared misfit of K by CC^T
    """

    C, K = _factor_and_cov(C, K)

    return masked_frobenius_sq(K, C @ C.T)


def grad_psi(
    C = None,
    K = None
    ):
    """Gradient of psi, -4 (P_L o (K - CC^T)) C

    Args:
        C (LowRankFactor, ndarray): L x q factor. Defaults to None.
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.

    Returns:
        ndarray: L x q gradient
    """

    C, K = _factor_and_cov(C, K)

    R = offdiag_mask(K.shape[0]).apply(K - C @ C.T)

    return -4.0 * R @ C


def hess_psi(
    C = None,
    K = None
    ):
    """Exact Hessian of psi with respect to vec(C)

    The full-Frobenius Hessian -4 I_q (x) R + 4 (C^T C) (x) I_L + 4 (C^T (x) C) M, with R = P_L o (K - CC^T), minus the
    curvature of the discarded diagonal terms, which is 8 C_ik C_il at row i + kL and column i + lL.

    Args:
        C (LowRankFactor, ndarray): L x q factor. Defaults to None.
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.

    Returns:
        ndarray: symmetric (Lq) x (Lq) Hessian, indexed by column-major vec(C)
    """

    C, K = _factor_and_cov(C, K)
    L, q = C.shape

    R = offdiag_mask(L).apply(K - C @ C.T)
    M = commutation_matrix(L, q)

    H = (-4.0 * np.kron(np.eye(q), R)
         + 4.0 * np.kron(C.T @ C, np.eye(L))
         + 4.0 * np.kron(C.T, C) @ M)

    # remove the diagonal terms' contribution, row i of C at positions i, i + L, ..., i + (q-1)L
    for i in range(L):
        idx = i + L * np.arange(q)
        H[np.ix_(idx, idx)] -= 8.0 * np.outer(C[i], C[i])

    return (H + H.T) / 2


def hess_psi_kron(
    C = None,
    K = None
    ):
    """Kronecker closed form -4 I_q (x) (P_L o R) + 4 P_qL o {(C^T (x) C) M} + 4 (P_q o C^T C) (x) I_L

    Agrees with hess_psi off the diagonal (i, i) blocks. At a factor H with HH^T equal to K off the diagonal and H^T H
    diagonal it reduces to 4 P_qL o {(H^T (x) H) M}.

    Args:
        C (LowRankFactor, ndarray): L x q factor. Defaults to None.
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.

    Returns:
        ndarray: symmetric (Lq) x (Lq) matrix
    """

    C, K = _factor_and_cov(C, K)
    L, q = C.shape

    R = offdiag_mask(L).apply(K - C @ C.T)
    M = commutation_matrix(L, q)

    H = (-4.0 * np.kron(np.eye(q), R)
         + 4.0 * offdiag_mask(L * q).apply(np.kron(C.T, C) @ M)
         + 4.0 * np.kron(offdiag_mask(q).apply(C.T @ C), np.eye(L)))

    return H


def aligned_factor(
    K = None,
    q = None
    ):
    """Factor H = V Gamma from the q leading eigenpairs of K

    HH^T is the best rank-q approximation of K and H^T H = Gamma^2 is diagonal.

    Args:
        K (CovMatrix, ndarray): symmetric L x L matrix. Defaults to None.
        q (int): number of leading eigenpairs. Defaults to None.

    Returns:
        LowRankFactor: L x q factor, negative eigenvalues clipped at 0
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    w, V = sym_eigendecomposition(K)

    if not 1 <= int(q) <= w.size:
        raise DataError(f"Invalid 'q' argument: {q} (matrix size {w.size})")

    q = int(q)

    return LowRankFactor(V[:, :q] * np.sqrt(np.clip(w[:q], 0, None)))


def assumption_E_check(
    K   = None,
    q   = None,
    tol = 1e-8
    ):
    """Check that the q leading eigenvectors of K have no (numerically) zero entries

    Args:
        K (CovMatrix, ndarray): symmetric L x L matrix. Defaults to None.
        q (int): number of leading eigenvectors to inspect, q <= L. Defaults to None.
        tol (float, optional): entries with magnitude <= tol count as zero. Defaults to 1e-8.

    Returns:
        tuple: (bool, list of (eigenvector index, entry index) pairs, 0-based, of the offending entries)
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    w, V = sym_eigendecomposition(K)

    if not 1 <= int(q) <= w.size:
        raise DataError(f"Invalid 'q' argument: {q} (matrix size {w.size})")

    rows, cols = np.nonzero(np.abs(V[:, :int(q)]) <= tol)
    offending  = sorted(zip(cols.tolist(), rows.tolist()))

    return len(offending) == 0, offending


def _rotation_directions(
    C = None
    ):
    """Orthonormal basis of the directions vec(CA), A skew, along which psi is constant"""

    L, q = C.shape

    cols = []
    for k in range(q):
        for l in range(k + 1, q):
            A = np.zeros((q, q))
            A[k, l], A[l, k] = 1.0, -1.0
            cols.append(vec(C @ A))

    if not cols:
        return np.zeros((L * q, 0))

    return scipy.linalg.orth(np.column_stack(cols))


def hessian_nonsingularity_check(
    C    = None,
    K    = None,
    tol  = None,
    form = "exact"
    ):
    """Check that the Hessian of psi at C is non-singular

    With form="exact" the exact Hessian is used and the rotation directions {vec(CA): A skew} are projected out first,
    since psi(CO) = psi(C) for orthogonal O makes the exact Hessian singular along them at any zero-residual factor
    when q >= 2. With form="kron" the Kronecker closed form is used as is.

    Args:
        C (LowRankFactor, ndarray): L x q factor. Defaults to None.
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.
        tol (float, optional): singular values <= tol count as zero. Defaults to None, i.e. 1e-8 times the largest singular value.
        form (str, optional): "exact" or "kron". Defaults to "exact".

    Returns:
        tuple: (bool, smallest singular value)
    """

    if form not in ("exact", "kron"):
        raise DataError(f"Invalid `form` argument: '{form}'\nPlease enter one of: ['exact', 'kron']")

    C, K = _factor_and_cov(C, K)

    if form == "kron":
        H = hess_psi_kron(C, K)
    else:
        H = hess_psi(C, K)

        # restrict to the orthogonal complement of the rotation directions
        T = _rotation_directions(C)

        if T.shape[1] > 0:
            Q = scipy.linalg.null_space(T.T)
            H = Q.T @ H @ Q

    s = scipy.linalg.svdvals(H)

    s_max = float(s.max()) if s.size else 0.0
    s_min = float(s.min()) if s.size else 0.0

    if tol is None:
        tol = 1e-8 * s_max

    logger.debug("Hessian singular values: min %.3e, max %.3e", s_min, s_max)

    return bool(s_max > 0 and s_min > tol), s_min
