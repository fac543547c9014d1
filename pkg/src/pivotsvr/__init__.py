"""Turning-point prediction with epsilon-SVR on a turning-point oscillator."""

from .exceptions import (CapacityError, ContractError, ConvergenceError, DataError,
                         DegenerateSwingError, EmptyDatasetError, PivotSVRError, SelectionError)
from .features import WindowFeatures, build_dataset
from .oscillator import Oscillator, build_oscillator
from .pivots import PEAK, TROUGH, Pivot, PivotSpec, alternate, extract_pivots, find_candidates
from .selection import Thresholds, TurningPointSVR, fit_predictor, optimize_thresholds, tprmse
from .series import PredictionTask, PriceSeries, load_csv, sample_tasks
from .svr import EpsilonSVR
from .trading import backtest, bah_report

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ContractError", "ConvergenceError", "DataError", "DegenerateSwingError",
    "EmptyDatasetError", "PivotSVRError", "SelectionError",
    "WindowFeatures", "build_dataset", "Oscillator", "build_oscillator",
    "PEAK", "TROUGH", "Pivot", "PivotSpec", "alternate", "extract_pivots", "find_candidates",
    "Thresholds", "TurningPointSVR", "fit_predictor", "optimize_thresholds", "tprmse",
    "PredictionTask", "PriceSeries", "load_csv", "sample_tasks",
    "EpsilonSVR", "backtest", "bah_report",
]
