"""Traffic light switching-cycle reconstruction and predictability metrics."""

from .classify import PredictabilityClass, Thresholds, classify
from .metrics import (bucket_metrics, cycle_discrepancy, green_length, median_cycle_discrepancy,
                      median_green_length, wait_time_diversity, wait_times)
from .model import BucketMetrics, Cycle, HourlyBucket, Observation, ObsKind, SignalState

__all__ = [
    "BucketMetrics", "Cycle", "HourlyBucket", "Observation", "ObsKind", "PredictabilityClass", "SignalState",
    "Thresholds", "bucket_metrics", "classify", "cycle_discrepancy", "green_length", "median_cycle_discrepancy",
    "median_green_length", "wait_time_diversity", "wait_times",
]

__version__ = "0.1.0"
