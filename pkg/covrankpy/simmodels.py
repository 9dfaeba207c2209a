import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.interpolate
import scipy.linalg

from covrankpy import utils
from covrankpy.linalg import CovMatrix, Grid, SampleMatrix, make_grid, psd_sqrt
from covrankpy.utils import DataError, NumericalError

logger = logging.getLogger(__name__)

__all__ = [
    "ModelSpec", "EigenBasis", "SimulatedData", "trapezoid_rule", "trig_function", "spline_functions",
    "orthonormalize_basis", "model_basis", "population_covariance", "heteroskedastic_profile",
    "noise_variances", "generate_model", "get_model_spec", "model_names",
    ]


@dataclass(frozen=True)
class ModelSpec:
    """Functional data model X(t) = mu(t) + sum_m Y_m phi_m(t), observed with additive noise

    Attributes:
        name (str): model identifier.
        mean (tuple): coefficients of mu in increasing powers of t, () for mu = 0.
        eigenvalues (tuple): lambda_1 >= ... > 0 of a finite-rank model, None for kernel models.
        eigenfunctions (tuple): trigonometric eigenfunctions "const", "sin:k", "cos:k" (sqrt(2) sin(2 k pi t), ...).
        spline_degree (int): degree of the spline basis, used when eigenfunctions is None.
        spline_knots (tuple): interior knots of the spline basis inside (0, 1).
        score_dist (str): "gaussian" or "skewed-mixture".
        noise (str): "homoskedastic", "heteroskedastic" or "grid-linear".
        sigma2 (float): homoskedastic noise variance.
        kernel (str): "brownian" or "rbf" for infinite-rank models, None otherwise.
        rbf_scale (float): squared length scale of the rbf kernel exp(-(t-s)^2 / rbf_scale).
    """

    name: str = "custom"
    mean: tuple = ()
    eigenvalues: tuple = None
    eigenfunctions: tuple = None
    spline_degree: int = None
    spline_knots: tuple = None
    score_dist: str = "gaussian"
    noise: str = "homoskedastic"
    sigma2: float = 1.0
    kernel: str = None
    rbf_scale: float = 10.0

    def __post_init__(self):

        object.__setattr__(self, "score_dist", utils._valid_score_dist(self.score_dist))
        object.__setattr__(self, "noise", utils._valid_noise(self.noise))
        object.__setattr__(self, "kernel", utils._valid_kernel(self.kernel))
        object.__setattr__(self, "mean", tuple(float(c) for c in self.mean))

        if (self.eigenvalues is None) == (self.kernel is None):
            raise DataError(f"Model '{self.name}': give exactly one of 'eigenvalues' and 'kernel'")

        if self.sigma2 < 0 or not np.isfinite(self.sigma2):
            raise DataError(f"Model '{self.name}': invalid noise variance {self.sigma2}")

        if self.kernel is not None:
            if self.rbf_scale <= 0:
                raise DataError(f"Model '{self.name}': rbf_scale must be positive")
            return

        lam = tuple(float(v) for v in self.eigenvalues)

        if not lam or any(not np.isfinite(v) or v <= 0 for v in lam):
            raise DataError(f"Model '{self.name}': eigenvalues must be finite and strictly positive, got {lam}")

        object.__setattr__(self, "eigenvalues", lam)

        if self.eigenfunctions is not None:
            funcs = tuple(self.eigenfunctions)

            if len(funcs) != len(lam):
                raise DataError(f"Model '{self.name}': {len(lam)} eigenvalues but {len(funcs)} eigenfunctions")

            for f in funcs:
                trig_function(f)

            object.__setattr__(self, "eigenfunctions", funcs)

        elif self.spline_degree is not None and self.spline_knots is not None:
            knots = tuple(float(k) for k in self.spline_knots)

            if int(self.spline_degree) < 1 or any(not 0 < k < 1 for k in knots) or np.any(np.diff(knots) <= 0):
                raise DataError(f"Model '{self.name}': invalid spline degree {self.spline_degree} or knots {knots}")

            if len(knots) + int(self.spline_degree) + 1 < len(lam):
                raise DataError(f"Model '{self.name}': spline basis has fewer than {len(lam)} functions")

            object.__setattr__(self, "spline_knots", knots)

        else:
            raise DataError(f"Model '{self.name}': finite-rank models need 'eigenfunctions' or a spline basis")

    @property
    def true_rank(self):
        """Rank of the covariance kernel, None when it is infinite"""
        return None if self.eigenvalues is None else len(self.eigenvalues)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)

        if unknown:
            raise DataError(f"Unknown ModelSpec keys: {sorted(unknown)}")

        return cls(**d)


@dataclass(frozen=True)
class EigenBasis:
    """Orthonormal functions phi_m(t) = sum_k raw_k(t) transform[k, m]"""

    functions: tuple
    transform: np.ndarray
    gram_tol: float = 1e-6

    def evaluate(self, t):
        """len(t) x r matrix with column m equal to phi_m(t)"""

        t   = np.asarray(t.nodes if isinstance(t, Grid) else t, dtype=float)
        raw = np.column_stack([f(t) for f in self.functions])

        return raw @ self.transform

    @property
    def size(self):
        return self.transform.shape[1]


@dataclass(frozen=True)
class SimulatedData:
    """Generated sample with its ground truth"""

    sample: SampleMatrix
    K_X: CovMatrix
    true_rank: int
    noise_var: np.ndarray
    signal: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)


def trapezoid_rule(
    num = 2001
    ):
    """Composite trapezoid nodes and weights on [0, 1]"""

    nodes   = np.linspace(0.0, 1.0, int(num))
    weights = np.full(nodes.size, 1.0 / (nodes.size - 1))
    weights[[0, -1]] /= 2

    return nodes, weights


def trig_function(
    name = None
    ):
    """Callable for "const", "sin:k" or "cos:k", the last two scaled by sqrt(2) at frequency 2 k pi"""

    if name == "const":
        return lambda t: np.ones_like(np.asarray(t, dtype=float))

    kind, _, k = str(name).partition(":")

    if kind not in ("sin", "cos") or not k.isdigit() or int(k) < 1:
        raise DataError(f"Invalid eigenfunction '{name}'\nPlease enter one of: 'const', 'sin:k', 'cos:k' with k >= 1")

    w = 2 * np.pi * int(k)

    if kind == "sin":
        return lambda t: np.sqrt(2) * np.sin(w * np.asarray(t, dtype=float))

    return lambda t: np.sqrt(2) * np.cos(w * np.asarray(t, dtype=float))


def spline_functions(
    degree = None,
    knots  = None
    ):
    """B-spline basis on [0, 1] with the given interior knots, boundary knots repeated degree + 1 times

    Args:
        degree (int): spline degree, 3 for cubic. Defaults to None.
        knots (tuple): interior knots. Defaults to None.

    Returns:
        list: len(knots) + degree + 1 callables
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    k = int(degree)
    t = np.concatenate([np.zeros(k + 1), np.asarray(knots, dtype=float), np.ones(k + 1)])

    funcs = []
    for i in range(t.size - k - 1):
        # unit coefficient vector picks the i-th B-spline
        c = np.zeros(t.size - k - 1)
        c[i] = 1.0
        funcs.append(scipy.interpolate.BSpline(t, c, k, extrapolate=True))

    return funcs


def orthonormalize_basis(
    raw        = None,
    quadrature = None,
    gram_tol   = 1e-6
    ):
    """Gram-Schmidt, in index order, under the quadrature L^2[0, 1] inner product

    Carried out through the Cholesky factor of the raw Gram matrix, which gives the same functions.

    Args:
        raw (list): callables t -> values. Defaults to None.
        quadrature (tuple, optional): (nodes, weights). Defaults to None, i.e. trapezoid_rule(2001).
        gram_tol (float, optional): largest tolerated deviation of the result's Gram matrix from I. Defaults to 1e-6.

    Returns:
        EigenBasis: orthonormal functions
    """

    if not raw:
        raise DataError("Invalid or missing 'raw' argument")

    nodes, weights = quadrature if quadrature is not None else trapezoid_rule()

    B = np.column_stack([f(nodes) for f in raw])
    G = B.T @ (weights[:, None] * B)

    w = np.linalg.eigvalsh(G)

    if w.min() <= 1e-12 * max(w.max(), 1.0):
        raise NumericalError(f"Raw basis is numerically rank deficient (Gram eigenvalues {w.min():.3e} .. {w.max():.3e})")

    R = scipy.linalg.cholesky(G, lower=False)
    T = scipy.linalg.solve_triangular(R, np.eye(R.shape[0]), lower=False)

    Phi = B @ T
    err = np.abs(Phi.T @ (weights[:, None] * Phi) - np.eye(T.shape[1])).max()

    if err > gram_tol:
        raise NumericalError(f"Orthonormalized basis misses orthonormality by {err:.3e}")

    return EigenBasis(tuple(raw), T, gram_tol)


def model_basis(
    spec = None
    ):
    """Eigenfunctions of a finite-rank model"""

    if spec is None or spec.eigenvalues is None:
        raise DataError("Model has no eigenfunctions")

    r = len(spec.eigenvalues)

    if spec.eigenfunctions is not None:
        funcs = [trig_function(f) for f in spec.eigenfunctions]
        return EigenBasis(tuple(funcs), np.eye(r))

    basis = orthonormalize_basis(spline_functions(spec.spline_degree, spec.spline_knots))

    # first r functions in index order
    return replace(basis, transform=basis.transform[:, :r])


def _kernel_matrix(
    spec = None,
    t    = None
    ):
    s, u = np.meshgrid(t, t, indexing="ij")

    if spec.kernel == "brownian":
        return np.minimum(s, u)

    return np.exp(-(s - u) ** 2 / spec.rbf_scale)


def population_covariance(
    spec = None,
    grid = None
    ):
    """Covariance kernel k_X evaluated on a grid

    Args:
        spec (ModelSpec): model. Defaults to None.
        grid (Grid, int): grid, or a grid size L for make_grid(L). Defaults to None.

    Returns:
        CovMatrix: L x L matrix k_X(t_i, t_j)
    """

    arg_lst = utils._check_args(arg_dict=locals())

    if arg_lst is not None:
        raise DataError(arg_lst)

    grid = grid if isinstance(grid, Grid) else make_grid(grid)

    if spec.kernel is not None:
        return CovMatrix(_kernel_matrix(spec, grid.nodes), grid=grid)

    Phi = model_basis(spec).evaluate(grid)

    return CovMatrix((Phi * np.asarray(spec.eigenvalues)) @ Phi.T, grid=grid)


def heteroskedastic_profile(
    kernel_diag = None,
    grid        = None,
    blocks      = 5,
    divisor     = 1.5
    ):
    """Block-constant noise variances from local averages of the signal variance

    The grid is split into `blocks` consecutive blocks of width U = L / blocks; inside each block the variance is the
    block mean of k_X(t, t) divided by `divisor`.

    Args:
        kernel_diag (ndarray): k_X(t_j, t_j), j = 1..L. Defaults to None.
        grid (Grid, optional): grid, checked against the length of kernel_diag. Defaults to None.
        blocks (int, optional): number of blocks, must divide L. Defaults to 5.
        divisor (float, optional): Defaults to 1.5.

    Returns:
        ndarray: length-L vector of variances
    """

    if kernel_diag is None:
        raise DataError("Invalid or missing 'kernel_diag' argument")

    diag = np.asarray(kernel_diag, dtype=float).ravel()
    L    = diag.size

    if grid is not None and len(grid) != L:
        raise DataError(f"Grid length {len(grid)} does not match the {L} variances")

    if L % int(blocks) != 0:
        raise DataError(f"Grid size L = {L} is not divisible by {blocks}; block-averaged noise needs L = {blocks} U")

    block_means = diag.reshape(int(blocks), -1).mean(axis=1)

    return np.repeat(block_means / divisor, L // int(blocks))


def noise_variances(
    spec = None,
    grid = None,
    K_X  = None
    ):
    """Per-node noise variances sigma_j^2 of a model on a grid"""

    grid = grid if isinstance(grid, Grid) else make_grid(grid)

    if spec.noise == "heteroskedastic":
        K_X = K_X if K_X is not None else population_covariance(spec, grid)
        return heteroskedastic_profile(np.diag(K_X.entries), grid)

    if spec.noise == "grid-linear":
        return grid.nodes.copy()

    return np.full(len(grid), float(spec.sigma2))


def _scores(
    spec = None,
    n    = None,
    rng  = None
    ):
    """n x r principal component scores with variances lambda_m"""

    lam = np.asarray(spec.eigenvalues)

    if spec.score_dist == "gaussian":
        return rng.standard_normal((n, lam.size)) * np.sqrt(lam)

    # N(2 s, s^2) w.p. 1/3 and N(-s, s^2) w.p. 2/3 with s = sqrt(lambda/3): mean 0, variance lambda
    s    = np.sqrt(lam / 3)
    comp = rng.random((n, lam.size)) < 1 / 3
    loc  = np.where(comp, 2 * s, -s)

    return loc + s * rng.standard_normal((n, lam.size))


def generate_model(
    spec = None,
    n    = None,
    L    = None,
    seed = None
    ):
    """Simulate n noisy discretely observed curves on the grid t_j = j/(L+1)

    Args:
        spec (ModelSpec, str): model or registered model name. Defaults to None.
        n (int): number of curves, n >= 2. Defaults to None.
        L (int): grid size, L >= 2. Defaults to None.
        seed (int, SeedSequence): random seed. Defaults to None.

    Returns:
        SimulatedData: W = X + noise with the population covariance, rank and noise variances
    """

    # list of function inputs
    input_args = locals()

    arg_lst = utils._check_args(
        arg_dict = input_args,
        ignore   = ["seed"],
        f        = any
        )

    if arg_lst is not None:
        raise DataError(arg_lst)

    spec = get_model_spec(spec) if isinstance(spec, str) else spec
    n, L = int(n), int(L)

    if n < 2:
        raise DataError(f"Invalid 'n' argument: {n}, need n >= 2")

    grid = make_grid(L)
    rng  = np.random.default_rng(seed)

    if spec.true_rank is not None and L < 2 * spec.true_rank + 1:
        logger.warning("L = %d is below 2r + 1 = %d for model %s", L, 2 * spec.true_rank + 1, spec.name)

    K_X = population_covariance(spec, grid)
    mu  = np.polynomial.polynomial.polyval(grid.nodes, spec.mean) if spec.mean else np.zeros(L)

    if spec.kernel is not None:
        X = mu + rng.standard_normal((n, L)) @ psd_sqrt(K_X)
    else:
        X = mu + _scores(spec, n, rng) @ model_basis(spec).evaluate(grid).T

    sigma2 = noise_variances(spec, grid, K_X)
    E      = rng.standard_normal((n, L)) * np.sqrt(sigma2)

    logger.debug("Generated model %s with n=%d, L=%d", spec.name, n, L)

    return SimulatedData(
        sample    = SampleMatrix(X + E, grid=grid),
        K_X       = K_X,
        true_rank = spec.true_rank,
        noise_var = sigma2,
        signal    = X,
        noise     = E
        )


_A1_MEAN = (1.8, -6.0, 5.0)
_A3_MEAN = (1.875, -12.5, 12.5)
_A5_FUNS = ("const", "sin:1", "cos:1", "sin:2", "cos:2", "sin:3")

_MODELS = {
    "A1":  ModelSpec("A1", _A1_MEAN, (0.6, 0.3, 0.1), ("const", "sin:1", "cos:1"), sigma2=1.0),
    "A2":  ModelSpec("A2", _A1_MEAN, (0.6, 0.3, 0.1), ("const", "sin:1", "cos:2"), score_dist="skewed-mixture", sigma2=1.0),
    "A3":  ModelSpec("A3", _A3_MEAN, (4.0, 2.0, 1.0), ("const", "cos:1", "sin:2"), sigma2=2.0),
    "A4":  ModelSpec("A4", _A3_MEAN, (4.0, 2.0, 1.0), ("const", "cos:1", "sin:2"), score_dist="skewed-mixture", sigma2=2.0),
    "A5":  ModelSpec("A5", (), (4.0, 3.5, 3.0, 2.5, 2.0, 1.5), _A5_FUNS, sigma2=3.0),
    "S1":  ModelSpec("S1", _A1_MEAN, (2.0, 1.7, 1.4, 1.1, 0.8, 0.5), spline_degree=3, spline_knots=(0.3, 0.5, 0.7), sigma2=3.0),
    "S2":  ModelSpec("S2", _A1_MEAN, (2.0, 1.7, 1.4, 1.1, 0.8, 0.5), spline_degree=3, spline_knots=(0.3, 0.5, 0.7),
                     score_dist="skewed-mixture", sigma2=3.0),
    "S3":  ModelSpec("S3", _A1_MEAN, (1.4, 1.1, 0.8, 0.5), spline_degree=2, spline_knots=(0.2, 0.6), sigma2=2.0),
    "S4":  ModelSpec("S4", _A1_MEAN, (1.4, 1.1, 0.8, 0.5), spline_degree=2, spline_knots=(0.2, 0.6),
                     score_dist="skewed-mixture", sigma2=2.0),
    "S5":  ModelSpec("S5", _A1_MEAN, (1.1, 0.8, 0.5), spline_degree=1, spline_knots=(0.2, 0.6),
                     score_dist="skewed-mixture", sigma2=1.0),
    "SF1": ModelSpec("SF1", _A1_MEAN, (4.0, 0.2, 0.1), ("const", "sin:1", "cos:1"), sigma2=1.0),
    "SF2": ModelSpec("SF2", (), (5.0, 4.0, 0.2, 0.2, 0.1, 0.1), _A5_FUNS, sigma2=1.0),
    "SF3": ModelSpec("SF3", (), (4.0, 3.5, 3.0, 0.3, 0.2, 0.1), _A5_FUNS, sigma2=3.0),
    "I1":  ModelSpec("I1", kernel="brownian", sigma2=1.0),
    "I2":  ModelSpec("I2", kernel="rbf", sigma2=1.0),
    "I3":  ModelSpec("I3", kernel="brownian", noise="grid-linear"),
    "I4":  ModelSpec("I4", kernel="rbf", noise="grid-linear"),
    }


def model_names():
    """Names of the registered models"""
    return list(_MODELS)


def get_model_spec(
    name  = None,
    noise = None
    ):
    """Registered model by name, optionally with another noise profile

    Args:
        name (str): one of model_names(), case insensitive. Defaults to None.
        noise (str, optional): "homoskedastic", "heteroskedastic" or "grid-linear". Defaults to None, i.e. the model's own.

    Returns:
        ModelSpec: the model
    """

    if name is None:
        raise DataError("Invalid or missing 'name' argument")

    key = str(name).upper()

    if key not in _MODELS:
        raise DataError(f"Invalid `name` argument: '{name}'\nPlease enter one of the following models: {model_names()}")

    spec = _MODELS[key]

    if noise is not None:
        spec = replace(spec, noise=utils._valid_noise(noise))

    return spec
