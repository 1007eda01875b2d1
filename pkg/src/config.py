"""
Location for configuration settings and app-wide constants.
"""

import os

from error import ConfigurationError

ARTIFACT_VERSION = "0.1.0"

LOG_LEVEL = os.environ.get("LOG_LEVEL", "WARNING").upper()

# Linear algebra tolerances
HERMITIAN_ATOL = 1e-12
DEGENERACY_RTOL = 1e-9
JACOBI_MAX_SWEEPS = 100
PHASE_ZERO_RTOL = 1e-12

# Postselection floors, applied to normalized states
OVERLAP_FLOOR = 1e-12
PROB_FLOOR = 1e-14
ABL_DENOMINATOR_FLOOR = 1e-14

# Pointer discretization. The default grid is sized for sigma_p = 1 and scaled
# by 1 / sigma_p otherwise, so both representations keep the same headroom.
DEFAULT_GRID_POINTS = 4096
DEFAULT_GRID_HALF_WIDTH = 64.0
MIN_GRID_POINTS = 128
MAX_GRID_POINTS = 65536
TAIL_SIGMAS = 6.0
LEAKAGE_LIMIT = 1e-8
EDGE_POINTS = 2

WEAK_REGIME_RATIO = 0.1

# Imaginary-quadrature calibration. With pre=|x+>, post=|y+> and A=sigma_z the
# weak value is exactly i, and the conditional position shift divided by
# g * var_x tends to -2 as g -> 0. The estimator multiplies that ratio by this
# constant. tests/test_protocol.py::test_quadrature_calibration re-derives it.
QUADRATURE_KAPPA = -0.5

# Ensemble runs draw one derived stream per block of trials.
ENSEMBLE_BLOCK_SIZE = 65536
DEFAULT_HISTOGRAM_BINS = 60

# Flow lines
NODE_FLOOR = 1e-12
MAX_STEP_HALVINGS = 40
DEFAULT_FLOW_TOLERANCE = 1e-8
DEFAULT_FLOW_STATIONS = 201


def thread_count() -> int:
    """
    Resolves the worker-thread cap from WEAKMEAS_THREADS.

    Absence means the implementation default (the CPU count). Anything other than
    a positive integer is rejected rather than silently ignored.
    """
    raw = os.environ.get("WEAKMEAS_THREADS")

    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1

    try:
        threads = int(raw.strip("\"'"))
    except ValueError as exc:
        raise ConfigurationError(
            f"WEAKMEAS_THREADS must be a positive integer, got {raw!r}",
            ["WEAKMEAS_THREADS"],
        ) from exc

    if threads < 1:
        raise ConfigurationError(
            f"WEAKMEAS_THREADS must be a positive integer, got {raw!r}",
            ["WEAKMEAS_THREADS"],
        )

    return threads
