"""Multi-curve HJM scenario engine: spline operators, VAR(1) curve dynamics,
coordinate-wise MLE, PCA reduction, forecast envelopes and coverage backtests."""

from .backtest import CoverageReport, RollingConfig, kupiec_lr, run_rolling
from .curves import CurveHistory, CurveSnapshot
from .dynamics import CurveSystem, LambdaBlocks, ModelParams, StateVector
from .estimation import EstimationWindow, bootstrap_errors, fit
from .grids import BucketGrid, parse_tenor_label
from .pca import decompose, select_components
from .scenario import ForecastSpec, envelope, gaussian_moments, simulate_paths
from .spline import SplineOperators

__version__ = "0.1.0"

__all__ = [
    "BucketGrid",
    "parse_tenor_label",
    "SplineOperators",
    "CurveSnapshot",
    "CurveHistory",
    "CurveSystem",
    "LambdaBlocks",
    "ModelParams",
    "StateVector",
    "EstimationWindow",
    "fit",
    "bootstrap_errors",
    "decompose",
    "select_components",
    "ForecastSpec",
    "gaussian_moments",
    "simulate_paths",
    "envelope",
    "kupiec_lr",
    "CoverageReport",
    "RollingConfig",
    "run_rolling",
    "__version__",
]
