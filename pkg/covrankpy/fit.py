import logging
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
import scipy.optimize

from covrankpy import utils
from covrankpy.linalg import CovMatrix, _as_matrix, masked_frobenius_sq, sym_eigendecomposition
from covrankpy.objective import LowRankFactor
from covrankpy.utils import DataError

logger = logging.getLogger(__name__)

__all__ = [
    "FitOptions", "RankFit", "spectral_init", "fit_rank", "fit_path",
    "scree_sequence", "scree_elbow",
    ]


@dataclass(frozen=True)
class FitOptions:
    """Options of the rank-constrained off-diagonal fit

    Attributes:
        max_iters (int): iteration cap of one descent run.
        grad_tol (float): convergence threshold on the gradient Frobenius norm.
        step_init (float): first trial step of the backtracking line search.
        step_shrink (float): backtracking shrink factor.
        armijo (float): sufficient-decrease constant.
        restarts (int): extra runs from randomly perturbed spectral starts.
        seed (int): seed of the restart perturbations.
        method (str): "gd" (backtracking gradient descent) or "lbfgs" (scipy L-BFGS-B).
        bb_steps (bool): use Barzilai-Borwein trial steps in "gd" after the first iteration.
        max_backtracks (int): line search gives up after this many shrinks.
    """

    max_iters: int = 2000
    grad_tol: float = 1e-9
    step_init: float = 1.0
    step_shrink: float = 0.5
    armijo: float = 1e-4
    restarts: int = 4
    seed: int = 0
    method: str = "gd"
    bb_steps: bool = True
    max_backtracks: int = 60

    def __post_init__(self):
        if self.max_iters < 1 or self.grad_tol <= 0 or self.step_init <= 0:
            raise DataError("FitOptions: max_iters, grad_tol and step_init must be positive")

        if not 0 < self.step_shrink < 1 or not 0 < self.armijo < 1:
            raise DataError("FitOptions: step_shrink and armijo must lie in (0, 1)")

        if self.restarts < 0 or self.max_backtracks < 1:
            raise DataError("FitOptions: restarts must be >= 0 and max_backtracks >= 1")

        if self.method not in ("gd", "lbfgs"):
            raise DataError(f"Invalid `method` argument: '{self.method}'\nPlease enter one of: ['gd', 'lbfgs']")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)

        if unknown:
            raise DataError(f"Unknown FitOptions keys: {sorted(unknown)}")

        return cls(**d)


@dataclass(frozen=True)
class RankFit:
    """Result of one rank-q off-diagonal completion"""

    q: int
    theta: CovMatrix
    factor: LowRankFactor
    statistic: float
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list, repr=False)
    restart: int = 0


def _psi_grad(
    C    = None,
    K    = None,
    mask = None
    ):
    """Objective and gradient in one pass, no validation"""

    R = mask * (K - C @ C.T)

    return float(np.sum(R * R)), -4.0 * R @ C


def spectral_init(
    K = None,
    q = None
    ):
    """Spectral starting point V_q Lambda_q^{1/2}

    Args:
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.
        q (int): target rank, q <= L. Defaults to None.

    Returns:
        LowRankFactor: top-q eigenvectors scaled by the square roots of their eigenvalues, negative eigenvalues clipped to 0
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    w, V = sym_eigendecomposition(K)

    if not 1 <= int(q) <= w.size:
        raise DataError(f"Invalid 'q' argument: {q} (matrix size {w.size})")

    q = int(q)

    return LowRankFactor(V[:, :q] * np.sqrt(np.clip(w[:q], 0, None)))


def _descend_gd(
    C0   = None,
    K    = None,
    opts = None
    ):
    """Backtracking gradient descent from C0, returns (C, iterations, converged, trace)"""

    mask = np.ones(K.shape) - np.eye(K.shape[0])

    C    = np.array(C0, dtype=float)
    f, g = _psi_grad(C, K, mask)

    trace     = [f]
    step      = opts.step_init
    prev      = None
    converged = False
    it        = 0

    for it in range(1, opts.max_iters + 1):

        g_sq = float(np.sum(g * g))

        if np.sqrt(g_sq) <= opts.grad_tol:
            converged = True
            it -= 1
            break

        # Barzilai-Borwein trial step from the last accepted move
        if opts.bb_steps and prev is not None:
            s  = C - prev[0]
            y  = g - prev[1]
            sy = float(np.sum(s * y))
            step = float(np.sum(s * s)) / sy if sy > 0 else opts.step_init

        t = step
        for _ in range(opts.max_backtracks):
            C_new        = C - t * g
            f_new, g_new = _psi_grad(C_new, K, mask)

            if f_new <= f - opts.armijo * t * g_sq:
                break

            t *= opts.step_shrink
        else:
            # no sufficient decrease within the backtracking budget
            logger.debug("Line search stalled at iteration %d, objective %.3e", it, f)
            it -= 1
            break

        prev       = (C, g)
        C, f, g    = C_new, f_new, g_new
        step       = t / opts.step_shrink
        trace.append(f)

    else:
        converged = bool(np.sqrt(np.sum(g * g)) <= opts.grad_tol)

    return C, it, converged, trace


def _descend_lbfgs(
    C0   = None,
    K    = None,
    opts = None
    ):
    """Quasi-Newton run from C0 via scipy L-BFGS-B, returns (C, iterations, converged, trace)"""

    mask = np.ones(K.shape) - np.eye(K.shape[0])
    L, q = C0.shape

    def fun(x):
        f, g = _psi_grad(x.reshape(L, q), K, mask)
        return f, g.ravel()

    trace = [fun(C0.ravel())[0]]

    res = scipy.optimize.minimize(
        fun,
        np.array(C0, dtype=float).ravel(),
        jac      = True,
        method   = "L-BFGS-B",
        callback = lambda x: trace.append(fun(x)[0]),
        options  = {"maxiter": opts.max_iters, "gtol": opts.grad_tol, "ftol": 0.0}
        )

    C = res.x.reshape(L, q)
    converged = bool(np.linalg.norm(fun(res.x)[1]) <= opts.grad_tol)

    return C, int(res.nit), converged, trace


def fit_rank(
    K    = None,
    q    = None,
    opts = None,
    init = None
    ):
    """Best off-diagonal fit of K by a rank <= q matrix

    Runs descent on psi from the spectral start and from opts.restarts perturbed copies of it (Gaussian noise of scale
    0.1 ||C_1||_F / sqrt(Lq)) and keeps the run with the lowest objective, ties going to the lowest run index.
    When init is given, a single run is made from init instead.

    Args:
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.
        q (int): rank bound, 1 <= q <= L. Defaults to None.
        opts (FitOptions, optional): optimizer options. Defaults to None, i.e. FitOptions().
        init (LowRankFactor, ndarray, optional): warm start. Defaults to None.

    Returns:
        RankFit: the fitted rank <= q matrix and the statistic T_q
    """

    # list of function inputs
    input_args = locals()

    arg_lst = utils._check_args(
        arg_dict = input_args,
        ignore   = ["opts", "init"],
        f        = any
        )

    if arg_lst is not None:
        raise DataError(arg_lst)

    opts = opts or FitOptions()
    grid = K.grid if isinstance(K, CovMatrix) else None
    K    = _as_matrix(K)

    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise DataError(f"Covariance must be square, got shape {K.shape}")

    if not np.all(np.isfinite(K)):
        raise DataError("Covariance has non-finite entries")

    L = K.shape[0]
    q = int(q)

    if not 1 <= q <= L:
        raise DataError(f"Invalid 'q' argument: {q}, need 1 <= q <= L = {L}")

    K = (K + K.T) / 2

    # starting points
    if init is not None:
        starts = [LowRankFactor(init).entries]

        if starts[0].shape != (L, q):
            raise DataError(f"Warm start has shape {starts[0].shape}, expected {(L, q)}")
    else:
        C1     = spectral_init(K, q).entries
        scale  = 0.1 * np.linalg.norm(C1) / np.sqrt(L * q)
        starts = [C1]

        for r in range(1, opts.restarts + 1):
            rng = utils._derive_rng(opts.seed, q, r)
            starts.append(C1 + scale * rng.standard_normal(C1.shape))

    descend = _descend_gd if opts.method == "gd" else _descend_lbfgs

    best = None
    for r, C0 in enumerate(starts):
        C, iters, converged, trace = descend(C0, K, opts)

        logger.debug("q=%d run %d: objective %.6e after %d iterations", q, r, trace[-1], iters)

        # strict improvement only, so ties keep the lowest run index
        if best is None or trace[-1] < best[3][-1]:
            best = (C, iters, converged, trace, r)

    C, iters, converged, trace, r = best

    factor = LowRankFactor(C)
    theta  = CovMatrix(C @ C.T, grid=grid)

    return RankFit(
        q               = q,
        theta           = theta,
        factor          = factor,
        statistic       = masked_frobenius_sq(K, theta),
        iterations      = iters,
        converged       = converged,
        objective_trace = trace,
        restart         = r
        )


def fit_path(
    K     = None,
    q_max = None,
    opts  = None
    ):
    """Fits of ranks 1..q_max with a nonincreasing statistic

    Whenever T_{q+1} > T_q, rank q+1 is refitted from the rank-q factor padded with a zero column; if that still does
    not beat T_q, the rank-q solution itself (which has rank <= q+1) is kept.

    Args:
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.
        q_max (int): largest rank, q_max <= L. Defaults to None.
        opts (FitOptions, optional): optimizer options. Defaults to None.

    Returns:
        list: RankFit for q = 1..q_max
    """

    if K is None or q_max is None:
        raise DataError("Invalid or missing 'K', 'q_max' arguments")

    L = _as_matrix(K).shape[0]

    if not 1 <= int(q_max) <= L:
        raise DataError(f"Invalid 'q_max' argument: {q_max}, need 1 <= q_max <= L = {L}")

    fits = []
    for q in range(1, int(q_max) + 1):

        fit = fit_rank(K, q, opts)

        if fits and fit.statistic > fits[-1].statistic:
            prev   = fits[-1]
            padded = np.hstack([prev.factor.entries, np.zeros((L, 1))])

            logger.debug("T_%d > T_%d, refitting from the padded rank-%d factor", q, q - 1, q - 1)

            warm = fit_rank(K, q, opts, init=padded)
            fit  = warm if warm.statistic <= prev.statistic else replace(prev, q=q, factor=LowRankFactor(padded))

        fits.append(fit)

    return fits


def scree_sequence(
    K     = None,
    q_max = None,
    opts  = None,
    fits  = None
    ):
    """Off-diagonal scree table q -> (T_q, T_q - T_{q-1})

    Args:
        K (CovMatrix, ndarray): L x L covariance. Defaults to None.
        q_max (int): largest rank, at most L; values above floor((L-1)/2) trigger a warning. Defaults to None.
        opts (FitOptions, optional): optimizer options. Defaults to None.
        fits (list, optional): precomputed output of fit_path to reuse. Defaults to None.

    Returns:
        pandas dataframe: columns "q", "statistic" and "difference", with T_0 = ||P_L o K||_F^2
    """

    if K is None or q_max is None:
        raise DataError("Invalid or missing 'K', 'q_max' arguments")

    L = _as_matrix(K).shape[0]

    if int(q_max) > (L - 1) // 2:
        warnings.warn(f"q_max = {q_max} exceeds floor((L-1)/2) = {(L - 1) // 2}; ranks this large may not be identifiable")

    if fits is None:
        fits = fit_path(K, q_max, opts)

    fits = fits[:int(q_max)]

    stats = [masked_frobenius_sq(K, np.zeros((L, L)))] + [f.statistic for f in fits]

    return pd.DataFrame({
        "q":          np.arange(1, len(fits) + 1),
        "statistic":  stats[1:],
        "difference": np.diff(stats),
        })


def scree_elbow(
    scree   = None,
    rel_tol = 0.05
    ):
    """Smallest q whose statistic drops to rel_tol times the previous one

    Args:
        scree (pandas dataframe): output of scree_sequence. Defaults to None.
        rel_tol (float, optional): relative drop defining the elbow. Defaults to 0.05.

    Returns:
        int: the elbow rank, or None if the scree never drops that far
    """

    if scree is None:
        raise DataError("Invalid or missing 'scree' argument")

    stats = scree["statistic"].to_numpy()
    prev  = stats - scree["difference"].to_numpy()

    for q, t, p in zip(scree["q"], stats, prev):
        if t <= rel_tol * p:
            return int(q)

    return None
