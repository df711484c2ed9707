import os
from importlib.resources import files
from pathlib import Path
from typing import Literal

DEFAULT_CACHE_PATH = Path().home() / ".cache" / "twogridmfe"


def get_default_cache_dir() -> Path:
    """Get the reference-solution cache directory, with environment variable override support."""
    cache_dir = os.getenv("TWOGRIDMFE_CACHE_DIR")
    if cache_dir:
        return Path(cache_dir)
    return DEFAULT_CACHE_PATH


DATA_PATH = files("twogridmfe.data")

# Gauss points per axis, exact for the cubic nonlinearity times a Q1 test function
QUADRATURE_POINTS = 3

DEFAULT_LINEAR_TOL = 1e-10
DEFAULT_LINEAR_MAX_ITER = 1000
DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_NEWTON_MAX = 50
DIRECT_SOLVER_LIMIT = 100_000
STABILITY_FACTOR = 10.0

# Multiple of machine epsilon times || |A| |x| || below which a residual is rounding noise
ROUNDING_SLACK = 64.0

# Absolute slack for point location and boundary classification
LOCATE_TOL = 1e-12
BOUNDARY_TOL = 1e-14

MethodTypes = Literal["mfe", "tgmfe"]
ProblemIds = Literal["example41", "example42", "example43"]

CSV_COLUMNS = (
    "method",
    "problem",
    "gamma",
    "theta",
    "dt",
    "H_hat",
    "h_hat",
    "err_u",
    "order_u",
    "err_sigma",
    "order_sigma",
    "cpu_seconds",
    "newton_total_iters",
)

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONFIG_ERROR = 2
