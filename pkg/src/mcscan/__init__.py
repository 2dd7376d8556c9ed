"""Multiscale covariance scanning for change points in high-dimensional
linear regression, with direct differential-parameter estimation and
simultaneous confidence bands."""

__version__ = "0.1.0"

from .core import (
    CrossProductSums,
    IntervalGram,
    IntervalMean,
    RegressionDataset,
    build_cross_sums,
    interval_gram,
    interval_mean,
    mad_scales,
    mad_standardize,
)
from .detection import (
    DetectorPeak,
    PathEntry,
    SegmentationResult,
    SolutionPath,
    ThresholdPolicy,
    auto_select,
    default_threshold,
    default_trimming,
    detect,
    detector,
    scan_interval,
    solution_path,
)
from .errors import ConvergenceWarning, DomainError, InfeasibleError, InputError, StageError
from .estimation import (
    AnchorInterval,
    DiffEstimate,
    anchor_intervals,
    clom,
    cv_lambda,
    estimate,
    estimate_all,
    lope,
    naive_diff,
)
from .inference import (
    ConfidenceBand,
    DesparsifiedEstimate,
    NoiseCovariance,
    SplitData,
    bootstrap_ci,
    desparsify,
    gamma_hat,
    gaussian_ci,
    infer_all,
    location_weights,
    split_even_odd,
)
from .intervals import IntervalSet, SeededInterval, generate
from .precision import PrecisionEstimate, clime, cv_eta
from .simulate import (
    EvalReport,
    ScenarioConfig,
    Truth,
    evaluate_detection,
    evaluate_inference,
    gen_m1,
    gen_m2,
    gen_m3,
)

__all__ = [
    "AnchorInterval",
    "ConfidenceBand",
    "ConvergenceWarning",
    "CrossProductSums",
    "DesparsifiedEstimate",
    "DetectorPeak",
    "DiffEstimate",
    "DomainError",
    "EvalReport",
    "InfeasibleError",
    "InputError",
    "IntervalGram",
    "IntervalMean",
    "IntervalSet",
    "NoiseCovariance",
    "PathEntry",
    "PrecisionEstimate",
    "RegressionDataset",
    "ScenarioConfig",
    "SeededInterval",
    "SegmentationResult",
    "SolutionPath",
    "SplitData",
    "StageError",
    "ThresholdPolicy",
    "Truth",
    "anchor_intervals",
    "auto_select",
    "bootstrap_ci",
    "build_cross_sums",
    "clime",
    "clom",
    "cv_eta",
    "cv_lambda",
    "default_threshold",
    "default_trimming",
    "desparsify",
    "detect",
    "detector",
    "estimate",
    "estimate_all",
    "evaluate_detection",
    "evaluate_inference",
    "gamma_hat",
    "gaussian_ci",
    "gen_m1",
    "gen_m2",
    "gen_m3",
    "generate",
    "infer_all",
    "interval_gram",
    "interval_mean",
    "location_weights",
    "lope",
    "mad_scales",
    "mad_standardize",
    "naive_diff",
    "scan_interval",
    "solution_path",
    "split_even_odd",
]
