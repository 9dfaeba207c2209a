# __init__.py
__version__ = "0.1.0"
from .utils import CovRankError, DataError, NumericalError
from .linalg import *
from .objective import *
from .fit import *
from .bootstrap import *
from .rank_test import *
from .simmodels import *
from .io import *
from .bench import *
