import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from covrankpy import utils
from covrankpy.utils import DataError

logger = logging.getLogger(__name__)

__all__ = [
    "Grid", "SampleMatrix", "CovMatrix", "MaskMatrix",
    "offdiag_mask", "masked_frobenius_sq", "commutation_matrix",
    "sym_eigendecomposition", "procrustes_align", "empirical_covariance",
    "make_grid", "vec", "unvec", "psd_clip", "psd_sqrt",
    ]


@dataclass(frozen=True)
class Grid:
    """Ordered observation nodes t_1 < ... < t_L inside [0, 1]"""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()

        if nodes.size < 2:
            raise DataError(f"A grid needs at least 2 nodes, got {nodes.size}")

        if not np.all(np.isfinite(nodes)) or nodes.min() < 0 or nodes.max() > 1:
            raise DataError("Grid nodes must be finite and lie in [0, 1]")

        if np.any(np.diff(nodes) <= 0):
            raise DataError("Grid nodes must be strictly increasing")

        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    def __len__(self):
        return self.nodes.size


def make_grid(
    L = None
    ):
    """Equispaced interior grid t_j = j/(L+1), j = 1..L

    Args:
        L (int): number of grid nodes. Defaults to None.

    Returns:
        Grid: grid strictly inside (0, 1)
    """

    if L is None or int(L) < 2:
        raise DataError(f"Invalid or missing 'L' argument: {L}")

    L = int(L)

    return Grid(np.arange(1, L + 1) / (L + 1))


@dataclass(frozen=True)
class SampleMatrix:
    """n x L panel of noisy discrete observations, rows are subjects and columns are grid nodes"""

    data: np.ndarray
    grid: Grid = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)

        if data.ndim != 2:
            raise DataError(f"Sample data must be a 2-d matrix, got {data.ndim} dimensions")

        if data.shape[0] < 2:
            raise DataError(f"A sample needs at least 2 rows, got {data.shape[0]}")

        if not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise DataError(f"Non-finite sample entry at row {bad[0] + 1}, column {bad[1] + 1}")

        grid = self.grid if self.grid is not None else make_grid(data.shape[1])

        if not isinstance(grid, Grid):
            grid = Grid(grid)

        if len(grid) != data.shape[1]:
            raise DataError(f"Grid length {len(grid)} does not match the {data.shape[1]} sample columns")

        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "grid", grid)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def L(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric L x L covariance matrix, symmetrized as (K + K^T)/2 on construction"""

    entries: np.ndarray
    grid: Grid = field(default=None, compare=False)

    def __post_init__(self):
        K = np.array(self.entries, dtype=float)

        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DataError(f"A covariance matrix must be square, got shape {K.shape}")

        if self.grid is not None and len(self.grid) != K.shape[0]:
            raise DataError(f"Grid length {len(self.grid)} does not match covariance dimension {K.shape[0]}")

        K = (K + K.T) / 2
        K.setflags(write=False)
        object.__setattr__(self, "entries", K)

    @property
    def L(self):
        return self.entries.shape[0]


@dataclass(frozen=True)
class MaskMatrix:
    """Off-diagonal projector P_L, stored by its size only"""

    size: int

    def apply(self, A):
        """Hadamard product P_L o A, i.e. A with its diagonal zeroed"""

        A = np.array(A, dtype=float)

        if A.shape != (self.size, self.size):
            raise DataError(f"Mask of size {self.size} cannot be applied to a matrix of shape {A.shape}")

        np.fill_diagonal(A, 0.0)

        return A

    def dense(self):
        return np.ones((self.size, self.size)) - np.eye(self.size)

    @property
    def det(self):
        # row reduction of J - I gives (L - 1)(-1)^(L - 1)
        return float((self.size - 1) * (-1) ** (self.size - 1))


def _as_matrix(
    A = None
    ):
    """Plain float ndarray from a CovMatrix, SampleMatrix or array-like"""

    if isinstance(A, CovMatrix):
        return A.entries

    if isinstance(A, SampleMatrix):
        return A.data

    return np.asarray(A, dtype=float)


def offdiag_mask(
    L = None
    ):
    """Return the off-diagonal mask P_L

    Args:
        L (int): matrix size, at least 1. Defaults to None.

    Returns:
        MaskMatrix: mask with zeros on the diagonal and ones elsewhere
    """

    if L is None or int(L) < 1:
        raise DataError(f"Invalid or missing 'L' argument: {L}")

    return MaskMatrix(int(L))


def masked_frobenius_sq(
    A = None,
    B = None
    ):
    """Squared Frobenius distance between two square matrices, disregarding the diagonal

    Args:
        A (ndarray, CovMatrix): L x L matrix. Defaults to None.
        B (ndarray, CovMatrix): L x L matrix. Defaults to None.

    Returns:
        float: sum over i != j of (A_ij - B_ij)^2
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    A = _as_matrix(A)
    B = _as_matrix(B)

    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DataError(f"Dimension mismatch: {A.shape} vs {B.shape}")

    R = offdiag_mask(A.shape[0]).apply(A - B)

    return float(np.sum(R * R))


def vec(
    R = None
    ):
    """Column-stacking vectorization"""

    return np.asarray(R).reshape(-1, order="F")


def unvec(
    v = None,
    L = None,
    q = None
    ):
    """Inverse of vec for an L x q matrix"""

    return np.asarray(v).reshape((L, q), order="F")


def commutation_matrix(
    L = None,
    q = None
    ):
    """Commutation matrix of order (L, q)

    The (Lq) x (Lq) permutation M with M vec(R) = vec(R^T) for every L x q matrix R.

    Args:
        L (int): row count of R. Defaults to None.
        q (int): column count of R. Defaults to None.

    Returns:
        ndarray: (Lq) x (Lq) permutation matrix
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    L, q = int(L), int(q)

    if L < 1 or q < 1:
        raise DataError(f"Commutation matrix orders must be positive, got ({L}, {q})")

    # R_ij sits at i + jL in vec(R) and at j + iq in vec(R^T)
    i, j = np.meshgrid(np.arange(L), np.arange(q), indexing="ij")

    M = np.zeros((L * q, L * q))
    M[(j + i * q).ravel(), (i + j * L).ravel()] = 1.0

    return M


def sym_eigendecomposition(
    K = None
    ):
    """Eigendecomposition of a symmetric matrix with deterministic ordering and signs

    Eigenvalues are sorted in descending order (ties keep their original order) and each eigenvector is
    flipped so that its largest-magnitude entry is positive.

    Args:
        K (CovMatrix, ndarray): symmetric matrix. Defaults to None.

    Returns:
        tuple: (eigenvalues descending, matrix of orthonormal eigenvectors as columns)
    """

    if K is None:
        raise DataError("Invalid or missing 'K' argument")

    K = _as_matrix(K)

    if not np.all(np.isfinite(K)):
        raise DataError("Cannot eigendecompose a matrix with non-finite entries")

    K = (K + K.T) / 2

    w, V = scipy.linalg.eigh(K)

    order = np.argsort(-w, kind="stable")
    w     = w[order]
    V     = V[:, order]

    # sign convention: largest-magnitude entry of each eigenvector is positive
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0

    return w, V * signs


def psd_clip(
    K = None
    ):
    """Nearest PSD matrix in Frobenius norm: negative eigenvalues set to 0"""

    w, V = sym_eigendecomposition(K)

    return (V * np.clip(w, 0, None)) @ V.T


def psd_sqrt(
    K = None
    ):
    """Symmetric PSD square root, negative eigenvalues clipped at 0"""

    w, V = sym_eigendecomposition(K)

    return (V * np.sqrt(np.clip(w, 0, None))) @ V.T


def procrustes_align(
    C  = None,
    C0 = None
    ):
    """Rotate a factor onto a target factor

    Solves the orthogonal Procrustes problem min over orthogonal O of ||C O - C0||_F and returns C O.

    Args:
        C (ndarray): L x q factor to rotate. Defaults to None.
        C0 (ndarray): L x q target factor. Defaults to None.

    Returns:
        ndarray: the aligned factor C O
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    C  = np.asarray(C, dtype=float)
    C0 = np.asarray(C0, dtype=float)

    if C.shape != C0.shape:
        raise DataError(f"Factor shapes differ: {C.shape} vs {C0.shape}")

    O, _ = scipy.linalg.orthogonal_procrustes(C, C0)

    return C @ O


def empirical_covariance(
    W      = None,
    center = True
    ):
    """Empirical covariance of the sample rows

    Args:
        W (SampleMatrix, ndarray): n x L observations. Defaults to None.
        center (bool, optional): subtract the sample mean first. Defaults to True.
            When False, returns the uncentered second moment (1/n) sum W_i W_i^T.

    Returns:
        CovMatrix: L x L covariance estimate
    """

    if W is None:
        raise DataError("Invalid or missing 'W' argument")

    grid = W.grid if isinstance(W, SampleMatrix) else None
    X    = np.atleast_2d(_as_matrix(W))

    n = X.shape[0]

    if n < (2 if center else 1):
        raise DataError(f"Too few rows for {'a centered' if center else 'an uncentered'} covariance: {n}")

    if center:
        X = X - X.mean(axis=0)

    return CovMatrix(X.T @ X / n, grid=grid)
