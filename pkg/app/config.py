"""
Runtime Configuration
=====================
Constants shared by the library and the command line, plus logging setup.

Everything is configured through argv or a config file; nothing is read
from the environment.
"""

import logging
import sys
from typing import Tuple


# ============================================================================
# CONFIGURATION
# ============================================================================

SCHEMA_VERSION = "1.0"

# Guards
MAX_GRID_POINTS = 2 ** 28
ENUMERATION_LIMIT = 10 ** 7

# q0 root refinement
Q0_PRECISION_BITS = 128
Q0_TOLERANCE = 1e-12

# Solver defaults
DEFAULT_EPS_SCHEDULE: Tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
DEFAULT_STEP0 = 0.1
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 2000
MAX_HALVINGS = 30
ARMIJO_FRACTION = 1e-4
MASS_TOLERANCE = 1e-10

# Decay fitting
SLOPE_TOLERANCE_CLOSED_FORM = 0.05
SLOPE_TOLERANCE_SOLVER = 0.15
MIN_RAY_SAMPLES = 8

# Theta vector consistency check (sum of 1/theta_i against n/p)
THETA_RELATIVE_TOLERANCE = 1e-12

# JSON output
FLOAT_DIGITS = 17


# ============================================================================
# LOGGING
# ============================================================================

LOG_FORMAT = "[%(asctime)s] %(message)s"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(verbose: bool = False) -> None:
    """
    Install the timestamped log format on the root logger.

    Logs go to stderr so that stdout only ever carries JSON documents.

    Args:
        verbose: Emit DEBUG records when True, INFO otherwise
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
