import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from covrankpy import utils
from covrankpy.fit import FitOptions, fit_path, fit_rank
from covrankpy.linalg import (
    CovMatrix, SampleMatrix, _as_matrix, offdiag_mask, psd_clip, psd_sqrt,
    )
from covrankpy.utils import DataError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "BootstrapConfig", "NoiseEstimate", "BootstrapTest", "select_M",
    "estimate_noise", "blup_proxies", "residual_cov", "bootstrap_replicate",
    "bootstrap_pvalue",
    ]


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings of the re-ranked bootstrap

    Attributes:
        B (int): number of bootstrap replicates.
        epsilon (float): constant of the m_n threshold, 0 < epsilon <= 1.
        d (int): hypothesis boundary; None means floor((L-1)/2).
        homoskedastic (bool): replace the noise estimate by its average over the grid.
        ridge (float): relative ridge; ridge * trace(K)/L is added to K before inversion.
        seed (int): seed of the replicate streams.
        fit (FitOptions): optimizer options for T_q and every T*_q.
        M (int): fixed noise-estimation rank, capped at d; None selects it with the m_n rule.
        scaled_threshold (bool): scale the m_n threshold by ||P_L o K||_F^2 (False gives epsilon log(n)/n).
        center (bool): center the sample before everything else.
        threads (int): replicate worker count; None uses every available CPU.
    """

    B: int = 500
    epsilon: float = 1.0
    d: int = None
    homoskedastic: bool = False
    ridge: float = 1e-10
    seed: int = 0
    fit: FitOptions = field(default_factory=lambda: FitOptions(restarts=1))
    M: int = None
    scaled_threshold: bool = True
    center: bool = True
    threads: int = None

    def __post_init__(self):
        if int(self.B) < 1:
            raise DataError(f"Invalid 'B' argument: {self.B}, need at least one replicate")

        if not 0 < self.epsilon <= 1:
            raise DataError(f"Invalid 'epsilon' argument: {self.epsilon}, need 0 < epsilon <= 1")

        if self.d is not None and int(self.d) < 1:
            raise DataError(f"Invalid 'd' argument: {self.d}")

        if self.M is not None and int(self.M) < 1:
            raise DataError(f"Invalid 'M' argument: {self.M}")

        if self.ridge < 0:
            raise DataError(f"Invalid 'ridge' argument: {self.ridge}")

        if self.threads is not None and int(self.threads) < 1:
            raise DataError(f"Invalid 'threads' argument: {self.threads}")

        if isinstance(self.fit, dict):
            object.__setattr__(self, "fit", FitOptions.from_dict(self.fit))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)

        if unknown:
            raise DataError(f"Unknown BootstrapConfig keys: {sorted(unknown)}")

        return cls(**d)


@dataclass(frozen=True)
class NoiseEstimate:
    """Estimated measurement error variances on the grid"""

    diag: np.ndarray
    M_used: int = None
    homoskedastic_value: float = None


@dataclass(frozen=True)
class BootstrapTest:
    """Bootstrap p-value of H_0,q together with what produced it"""

    q: int
    p_value: float
    statistic: float
    bootstrap_statistics: np.ndarray
    M_used: int
    noise: NoiseEstimate


def select_M(
    statistics = None,
    q          = None,
    d          = None,
    epsilon    = 1.0,
    n          = None,
    scale      = 1.0
    ):
    """Rank used for noise estimation

    m_n is the smallest m in [q, d] with T_m <= epsilon (log n / n) scale (d + 1 when there is none), and
    M = m_n if m_n < d else d.

    Args:
        statistics (list): T_q, ..., T_d. Defaults to None.
        q (int): rank under test. Defaults to None.
        d (int): hypothesis boundary. Defaults to None.
        epsilon (float, optional): threshold constant. Defaults to 1.0.
        n (int): sample size, n >= 2. Defaults to None.
        scale (float, optional): threshold scale, > 0. Defaults to 1.0.

    Returns:
        int: M
    """

    # list of function inputs
    input_args = locals()

    arg_lst = utils._check_args(
        arg_dict = input_args,
        ignore   = ["epsilon", "scale"],
        f        = any
        )

    if arg_lst is not None:
        raise DataError(arg_lst)

    statistics = list(statistics)

    if not statistics:
        raise DataError("Empty 'statistics' argument")

    if len(statistics) != d - q + 1:
        raise DataError(f"Expected {d - q + 1} statistics T_{q}..T_{d}, got {len(statistics)}")

    if n < 2 or scale <= 0:
        raise DataError(f"Need n >= 2 and scale > 0, got n = {n}, scale = {scale}")

    threshold = epsilon * (np.log(n) / n) * scale

    m_n = d + 1
    for m, T in zip(range(q, d + 1), statistics):
        if T <= threshold:
            m_n = m
            break

    return int(m_n if m_n < d else d)


def estimate_noise(
    K_hat         = None,
    theta_M       = None,
    homoskedastic = False,
    M             = None
    ):
    """Measurement error variances max(K_jj - Theta_M(j, j), 0)

    Args:
        K_hat (CovMatrix, ndarray): empirical covariance. Defaults to None.
        theta_M (CovMatrix, ndarray): rank-M fit of K_hat. Defaults to None.
        homoskedastic (bool, optional): replace every entry by the mean of the clipped entries. Defaults to False.
        M (int, optional): rank of theta_M, echoed in the result. Defaults to None.

    Returns:
        NoiseEstimate: nonnegative per-node variances
    """

    if K_hat is None or theta_M is None:
        raise DataError("Invalid or missing 'K_hat', 'theta_M' arguments")

    K     = _as_matrix(K_hat)
    theta = _as_matrix(theta_M)

    if K.shape != theta.shape:
        raise DataError(f"Dimension mismatch: {K.shape} vs {theta.shape}")

    diag = np.clip(np.diag(K) - np.diag(theta), 0, None)

    if homoskedastic:
        value = float(diag.mean())
        return NoiseEstimate(np.full(diag.size, value), M_used=M, homoskedastic_value=value)

    return NoiseEstimate(diag, M_used=M)


def _regularized_solve(
    K_hat = None,
    rhs   = None,
    ridge = 0.0
    ):
    """(K_hat + ridge I)^{-1} rhs"""

    K = _as_matrix(K_hat)

    try:
        return scipy.linalg.solve(K + ridge * np.eye(K.shape[0]), rhs, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Regularized covariance is singular, the data look degenerate: {e}")


def blup_proxies(
    W       = None,
    theta_q = None,
    K_hat   = None,
    ridge   = 0.0
    ):
    """Estimated best linear predictors W_bar + Theta_q (K_hat + ridge I)^{-1} (W_i - W_bar)

    Args:
        W (SampleMatrix, ndarray): n x L observations. Defaults to None.
        theta_q (CovMatrix, ndarray): rank-q fit of K_hat. Defaults to None.
        K_hat (CovMatrix, ndarray): empirical covariance. Defaults to None.
        ridge (float, optional): absolute ridge added to K_hat. Defaults to 0.0.

    Returns:
        ndarray: n x L matrix of proxies, one row per subject
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    X     = _as_matrix(W)
    theta = _as_matrix(theta_q)

    if theta.shape != _as_matrix(K_hat).shape or X.shape[1] != theta.shape[0]:
        raise DataError(f"Dimension mismatch: sample {X.shape}, theta {theta.shape}, K {_as_matrix(K_hat).shape}")

    W_bar = X.mean(axis=0)
    G     = _regularized_solve(K_hat, theta, ridge)

    # row form of Theta K^{-1} (W_i - W_bar), using symmetry of both matrices
    return W_bar + (X - W_bar) @ G


def residual_cov(
    theta_q = None,
    K_hat   = None,
    D_hat   = None,
    ridge   = 0.0
    ):
    """Covariance D + Theta_q - Theta_q (K_hat + ridge I)^{-1} Theta_q, clipped to PSD

    Args:
        theta_q (CovMatrix, ndarray): rank-q fit of K_hat. Defaults to None.
        K_hat (CovMatrix, ndarray): empirical covariance. Defaults to None.
        D_hat (NoiseEstimate, ndarray): noise variances. Defaults to None.
        ridge (float, optional): absolute ridge added to K_hat. Defaults to 0.0.

    Returns:
        CovMatrix: PSD residual covariance
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    theta = _as_matrix(theta_q)
    diag  = D_hat.diag if isinstance(D_hat, NoiseEstimate) else np.asarray(D_hat, dtype=float)

    if theta.shape != _as_matrix(K_hat).shape or diag.size != theta.shape[0]:
        raise DataError(f"Dimension mismatch: theta {theta.shape}, K {_as_matrix(K_hat).shape}, D {diag.shape}")

    A = theta - theta @ _regularized_solve(K_hat, theta, ridge)

    return CovMatrix(psd_clip(np.diag(diag) + (A + A.T) / 2))


def bootstrap_replicate(
    proxies  = None,
    residual = None,
    rng      = None,
    root     = None,
    grid     = None
    ):
    """One bootstrap sample zeta_j = U*_j + V*_j

    U*_j are drawn uniformly with replacement from the proxy rows and V*_j are centered Gaussians with the residual
    covariance, generated through its symmetric PSD square root.

    Args:
        proxies (ndarray): n x L proxy rows. Defaults to None.
        residual (CovMatrix, ndarray): PSD residual covariance. Defaults to None.
        rng (numpy Generator): random stream. Defaults to None.
        root (ndarray, optional): precomputed square root of residual. Defaults to None.
        grid (Grid, optional): grid of the returned sample. Defaults to None.

    Returns:
        SampleMatrix: n x L bootstrap sample
    """

    if proxies is None or residual is None or rng is None:
        raise DataError("Invalid or missing 'proxies', 'residual', 'rng' arguments")

    P    = np.asarray(proxies, dtype=float)
    n, L = P.shape

    if root is None:
        root = psd_sqrt(residual)

    U = P[rng.integers(0, n, size=n)]
    V = rng.standard_normal((n, L)) @ root

    return SampleMatrix(U + V, grid=grid)


def bootstrap_pvalue(
    W    = None,
    q    = None,
    cfg  = None,
    fits = None
    ):
    """Bootstrap p-value of H_0,q: rank(K_X) = q against rank(K_X) > q

    The rank fits T_1..T_d of the sample are computed once (or taken from fits) and shared by the statistic, the
    proxies and the choice of M. Each replicate b has its own random stream derived from (cfg.seed, q, b), so the
    result does not depend on cfg.threads.

    Args:
        W (SampleMatrix, ndarray): n x L observations. Defaults to None.
        q (int): rank under test, q <= d. Defaults to None.
        cfg (BootstrapConfig, optional): settings. Defaults to None, i.e. BootstrapConfig().
        fits (list, optional): output of fit_path for the (centered) sample covariance, at least d entries. Defaults to None.

    Returns:
        BootstrapTest: p = (1 + #{b: T*_b >= T_q}) / (B + 1), T_q, the B bootstrap statistics, M and the noise estimate
    """

    # list of function inputs
    input_args = locals()

    arg_lst = utils._check_args(
        arg_dict = input_args,
        ignore   = ["cfg", "fits"],
        f        = any
        )

    if arg_lst is not None:
        raise DataError(arg_lst)

    cfg = cfg or BootstrapConfig()
    S   = W if isinstance(W, SampleMatrix) else SampleMatrix(W)
    n   = S.n
    L   = S.L
    q   = int(q)
    d   = int(cfg.d) if cfg.d is not None else (L - 1) // 2

    if not 1 <= q <= d:
        raise DataError(f"Invalid 'q' argument: {q}, need 1 <= q <= d = {d}")

    if d > L:
        raise DataError(f"Hypothesis boundary d = {d} exceeds the grid size L = {L}")

    if d > (L - 1) // 2:
        warnings.warn(f"d = {d} exceeds floor((L-1)/2) = {(L - 1) // 2}; the rank may not be identifiable on this grid")

    # centering is done once, everything below runs on X
    X      = S.data - S.data.mean(axis=0) if cfg.center else S.data
    sample = SampleMatrix(X, grid=S.grid)
    K_hat  = CovMatrix(X.T @ X / n, grid=S.grid)

    try:
        if fits is None:
            fits = fit_path(K_hat, d, cfg.fit)

        if len(fits) < d:
            raise DataError(f"Need fits for ranks 1..{d}, got {len(fits)}")

        T_q     = fits[q - 1].statistic
        theta_q = fits[q - 1].theta

        # rank used for noise estimation
        if cfg.M is not None:
            M = min(int(cfg.M), d)
        else:
            scale = float(np.sum(offdiag_mask(L).apply(K_hat.entries) ** 2)) if cfg.scaled_threshold else 1.0

            M = select_M(
                statistics = [f.statistic for f in fits[q - 1:d]],
                q          = q,
                d          = d,
                epsilon    = cfg.epsilon,
                n          = n,
                scale      = scale if scale > 0 else 1.0
                )

        noise = estimate_noise(K_hat, fits[M - 1].theta, cfg.homoskedastic, M=M)
        ridge = cfg.ridge * float(np.trace(K_hat.entries)) / L

        proxies  = blup_proxies(sample, theta_q, K_hat, ridge)
        residual = residual_cov(theta_q, K_hat, noise, ridge)
        root     = psd_sqrt(residual)

    except NumericalError as e:
        raise NumericalError(utils._query_error(arg_dict=input_args, stage="bootstrap setup", e_msg=e))

    logger.info("Testing rank q=%d: T_q = %.6g, M = %d, B = %d", q, T_q, M, cfg.B)

    def _replicate_statistic(b):
        rng  = utils._derive_rng(cfg.seed, q, b)
        zeta = bootstrap_replicate(proxies, residual, rng, root=root, grid=S.grid).data

        # step (6) second moment of the replicate, uncentered
        return fit_rank(zeta.T @ zeta / n, q, cfg.fit).statistic

    threads = cfg.threads or os.cpu_count() or 1

    if threads == 1:
        boot = [_replicate_statistic(b) for b in range(cfg.B)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            boot = list(ex.map(_replicate_statistic, range(cfg.B)))

    boot = np.asarray(boot)
    p    = (1 + int(np.sum(boot >= T_q))) / (cfg.B + 1)

    logger.info("Rank q=%d: p-value %.4f", q, p)

    return BootstrapTest(
        q                    = q,
        p_value              = float(p),
        statistic            = float(T_q),
        bootstrap_statistics = boot,
        M_used               = int(M),
        noise                = noise
        )
