"""Point-wise data-copying detection for generative models."""

__version__ = "0.1.0"

from .baseline import BaselineParams, BaselineReport, CMeans, ThreeSampleTest, baseline_test
from .calibration import (
    NullCache,
    NullDistribution,
    SignificanceDecision,
    decide,
    decide_median,
    null_calibrate,
    p_value,
)
from .detector import DataCopyDetector, DetectionParams, DetectionReport, detect
from .geometry import Ball, BallIndex
from .mass import BallMassEstimator, RegularityDimensionEstimator, est_mass, estimate_k

__all__ = [
    "Ball",
    "BallIndex",
    "BallMassEstimator",
    "BaselineParams",
    "BaselineReport",
    "CMeans",
    "DataCopyDetector",
    "DetectionParams",
    "DetectionReport",
    "NullCache",
    "NullDistribution",
    "RegularityDimensionEstimator",
    "SignificanceDecision",
    "ThreeSampleTest",
    "baseline_test",
    "decide",
    "decide_median",
    "detect",
    "est_mass",
    "estimate_k",
    "null_calibrate",
    "p_value",
]
