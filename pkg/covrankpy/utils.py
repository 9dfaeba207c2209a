import numpy as np


class CovRankError(Exception):
    """Base class for errors raised by covrankpy"""


class DataError(CovRankError, ValueError):
    """Malformed or inconsistent input data"""


class NumericalError(CovRankError, ArithmeticError):
    """A numerical step could not be carried out"""


def _check_args(
        arg_dict = None,
        ignore   = None,
        f        = any
        ):
    """Check all arguments of a function for any/all NULL values

    Internal function for checking a function arguments for any/all invalid/missing arguments necessary to the function it is called within

    Args:
        arg_dict (dict): dictionary of function arguments by calling locals() within a function. Defaults to None.
        ignore (list, optional):  List of function arguments to ignore None check. Defaults to None.
        f (built-in function): Built in function "any" or "all" to indicate whether to check for "any" or "all" None argument.
            If "any" then if any of the function arguments are None, then an error is returned.
            If "all" then all relevant arguments must be None for an error to be returned. Defaults to any.

    Returns:
        string: error statement with any/all None arguments listed, or None if no error is thrown by None values
    """

    # if no function arguments are given, throw an error
    if arg_dict is None:
        raise Exception("provide a dictionary of function arguments by calling 'locals()', within another function")

    # drop ignored arguments, keeping the order of the signature
    ignore   = ignore or []
    key_args = [k for k in arg_dict.keys() if k not in ignore]
    val_args = [arg_dict[k] for k in key_args]

    # if any/all arguments are None, return an error statement. Otherwise return None if None check is passed
    if key_args and f(i is None for i in val_args):

        # names of the None arguments
        key_miss = ", ".join(["'" + key_args[i] + "'" for i in range(len(val_args)) if val_args[i] is None])

        return "Invalid or missing " + key_miss + " arguments"

    return None


def _describe(
        val = None
        ):
    """Short printable summary of an argument value, arrays are summarized by shape"""

    if isinstance(val, np.ndarray):
        return f"array{val.shape}"

    # domain types carry their matrix on a 'data', 'entries' or 'values' attribute
    for attr in ("data", "entries", "values"):
        inner = getattr(val, attr, None)
        if isinstance(inner, np.ndarray):
            return f"{type(val).__name__}{inner.shape}"

    return str(val)


def _query_error(
        arg_dict = None,
        stage    = None,
        e_msg    = None
        ):
    """Error message handler for failed computations

    Internal function for generating dynamic error messages when a step of a multi-step computation fails.
    Designed to be called within another function and print out the functions input arguments.

    Args:
        arg_dict (dict): dictionary of function arguments by calling locals() within a function. Defaults to None.
        stage (str): name of the step that failed. Defaults to None.
        e_msg (exception, str): exception or message that should be pointed to as the original error message. Defaults to None.

    Returns:
        str: error message that includes the inputs that led to the error, the failing stage, and the original error message
    """

    # if no function arguments are given, throw an error
    if arg_dict is None:
        raise Exception("provide a dictionary of function arguments by calling 'locals()', within another function")

    q_lst = [f"{k}: {_describe(v)}" for k, v in arg_dict.items()]

    q_msg = ("COMPUTATION ERROR\nInputs:\n" + "\n".join(q_lst) +
            "\nFailed stage: " + str(stage) +
            "\n\n" + "Original error message: " + "\n-----------------------\n\n" + str(e_msg)
            )

    return q_msg


def _valid_score_dist(
        score_dist = None
        ):
    """Normalize a principal component score distribution name to 'gaussian' or 'skewed-mixture'"""

    gauss_lst   = ["gaussian", "gauss", "normal", "norm", "g"]
    mixture_lst = ["skewed-mixture", "skewed_mixture", "mixture", "skewed", "mix", "s"]

    # default to gaussian scores
    if score_dist is None:
        return "gaussian"

    score_dist = str(score_dist).lower()

    if score_dist in gauss_lst:
        return "gaussian"

    if score_dist in mixture_lst:
        return "skewed-mixture"

    raise DataError(
        f"Invalid `score_dist` argument: '{score_dist}'"
        f"\nPlease enter one of the following valid score distributions:\nGaussian: {gauss_lst}\nSkewed mixture: {mixture_lst}"
        )


def _valid_noise(
        noise = None
        ):
    """Normalize a measurement error profile name to 'homoskedastic', 'heteroskedastic' or 'grid-linear'"""

    hom_lst    = ["homoskedastic", "homo", "hom", "constant"]
    het_lst    = ["heteroskedastic", "hetero", "het", "block"]
    linear_lst = ["grid-linear", "grid_linear", "linear", "grid"]

    if noise is None:
        return "homoskedastic"

    noise = str(noise).lower()

    if noise in hom_lst:
        return "homoskedastic"

    if noise in het_lst:
        return "heteroskedastic"

    if noise in linear_lst:
        return "grid-linear"

    raise DataError(
        f"Invalid `noise` argument: '{noise}'"
        f"\nPlease enter one of the following valid noise profiles:\nHomoskedastic: {hom_lst}\nHeteroskedastic: {het_lst}\nGrid-linear: {linear_lst}"
        )


def _valid_kernel(
        kernel = None
        ):
    """Normalize an infinite-rank kernel name to 'brownian' or 'rbf', None passes through"""

    brownian_lst = ["brownian", "brownian-motion", "bm", "wiener"]
    rbf_lst      = ["rbf", "gaussian", "squared-exponential", "se"]

    if kernel is None:
        return None

    kernel = str(kernel).lower()

    if kernel in brownian_lst:
        return "brownian"

    if kernel in rbf_lst:
        return "rbf"

    raise DataError(
        f"Invalid `kernel` argument: '{kernel}'"
        f"\nPlease enter one of the following valid kernels:\nBrownian motion: {brownian_lst}\nRBF: {rbf_lst}"
        )


def _derive_rng(
        *keys
        ):
    """Independent random generator for a tuple of non-negative integer keys (seed, stream, index, ...)

    The same keys always give the same stream, whatever order or thread they are requested in.
    """

    if any(k is None for k in keys):
        raise DataError("Invalid or missing random stream keys")

    return np.random.default_rng(np.random.SeedSequence([int(k) % (2**63) for k in keys]))


def _derive_seed(
        *keys
        ):
    """Integer seed derived from a tuple of non-negative integer keys"""

    return int(np.random.SeedSequence([int(k) % (2**63) for k in keys]).generate_state(1, dtype=np.uint64)[0] % (2**63))
