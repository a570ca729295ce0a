"""Interval-valued time series classification through learned recurrence images.

Interval series are collapsed to point series by a learnable convex
combination of their bounds, turned into smooth recurrence images and
classified by a small CNN; network weights and combination weights are fitted
jointly with ADMM.
"""

from .core import (
    Axis,
    CenterRange,
    CombinationCoefficients,
    IntervalSeries,
    MvIntervalSeries,
    convex_combination,
    convex_combination_mv,
    from_center_range,
    to_center_range,
)
from .errors import IntervalRPError
from .imaging import EmbeddingSpec, RecurrenceImage, ThresholdSpec, jrp, rp
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "BACKEND",
    "CenterRange",
    "CombinationCoefficients",
    "EmbeddingSpec",
    "IntervalRPError",
    "IntervalSeries",
    "MvIntervalSeries",
    "RecurrenceImage",
    "ThresholdSpec",
    "convex_combination",
    "convex_combination_mv",
    "from_center_range",
    "jrp",
    "rp",
    "to_center_range",
]
