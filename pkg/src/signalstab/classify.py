"""Predictability quadrants from the (cycle discrepancy, wait time diversity) pair."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Union

from .model import BucketMetrics

DEFAULT_CD_S = 5
DEFAULT_WTD = 0.20


class PredictabilityClass(str, Enum):
    HIGH_BOTH_STABLE = "high_both_stable"
    # cycle discrepancy high: cycle stacking unsuitable
    HIGH_CYCLE_STACKING_UNSUITABLE = "high_cycle_stacking_unsuitable"
    # wait time diversity high: time-to-green unstable between green phases
    HIGH_WAIT_TIME_UNPREDICTABLE = "high_wait_time_unpredictable"
    LOW = "low"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Thresholds:
    cd_s: int = DEFAULT_CD_S
    wtd: Union[float, Fraction] = DEFAULT_WTD

    def __post_init__(self) -> None:
        if self.cd_s <= 0 or self.wtd <= 0:
            raise ValueError("thresholds must be positive")

    @property
    def wtd_exact(self) -> Fraction:
        # via str so that 0.2 means exactly 1/5
        return self.wtd if isinstance(self.wtd, Fraction) else Fraction(str(self.wtd))


def classify(metrics: BucketMetrics, thresholds: Thresholds = Thresholds()) -> PredictabilityClass:
    cd = metrics.median_cycle_discrepancy_s
    wtd = metrics.wait_time_diversity
    if cd is None or wtd is None:
        return PredictabilityClass.INDETERMINATE
    cd_high = cd > thresholds.cd_s
    wtd_high = wtd > thresholds.wtd_exact
    if cd_high and wtd_high:
        return PredictabilityClass.LOW
    if cd_high:
        return PredictabilityClass.HIGH_CYCLE_STACKING_UNSUITABLE
    if wtd_high:
        return PredictabilityClass.HIGH_WAIT_TIME_UNPREDICTABLE
    return PredictabilityClass.HIGH_BOTH_STABLE
