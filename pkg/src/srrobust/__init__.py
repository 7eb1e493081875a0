"""Shiryaev-Roberts and CUSUM change-point detection for the Gaussian
mean-shift model, with integral-equation and Monte Carlo evaluation of
ARL to false alarm and stationary average detection delay."""

from .detect import (CusumState, GaussianStream, Procedure, RunOutcome, SrState, cusum_update,
                     multi_cyclic_run, run_to_alarm, sr_update)
from .errors import (CalibrationError, InvalidInputError, InvalidModelError, NumericalFailureError,
                     SRError, TruncatedRunError)
from .model import GaussianModel, LrLaw, Regime, lr_cdf, lr_pdf, lr_step, std_normal_cdf, zeta
from .solver import (GridConfig, KernelGrid, PerformanceReport, Scheme, build_grid, relative_efficiency,
                     solve_arl, solve_delay, solve_iadd, stadd)
from .calibrate import Calibration, calibrate_exact, threshold_from_zeta

__version__ = "0.1.0"
