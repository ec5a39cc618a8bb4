"""Instability metrics per hourly bucket: cycle discrepancy, wait time diversity, green length."""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from .bucket import build_sequences, sequence_states
from .model import BucketMetrics, Cycle, HourlyBucket

_GREEN_RUN = re.compile(rb"G+")

CycleLike = Union[Cycle, bytes]
BucketLike = Union[HourlyBucket, Sequence[Cycle]]


def _states(c: CycleLike) -> bytes:
    return c if isinstance(c, (bytes, bytearray)) else c.states


def _cycles(bucket: BucketLike) -> Sequence[Cycle]:
    return bucket.cycles if isinstance(bucket, HourlyBucket) else bucket


def _sequences(bucket: BucketLike) -> Sequence[Sequence[Cycle]]:
    if isinstance(bucket, HourlyBucket) and (bucket.sequences or not bucket.cycles):
        return bucket.sequences
    return build_sequences(_cycles(bucket))


def lower_median(values: Sequence):
    """Median that picks the lower middle element for even counts."""
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def cycle_discrepancy(c1: CycleLike, c2: CycleLike) -> int:
    """Seconds in which two start-aligned cycles disagree, counting length overhang."""
    a, b = _states(c1), _states(c2)
    if not a or not b:
        raise ValueError("cycle discrepancy needs two non-empty cycles")
    la, lb = len(a), len(b)
    short = min(la, lb)
    if short >= 64:
        va = np.frombuffer(a, dtype=np.uint8, count=short)
        vb = np.frombuffer(b, dtype=np.uint8, count=short)
        mismatches = int(np.count_nonzero(va != vb))
    else:
        mismatches = sum(1 for x, y in zip(a, b) if x != y)
    return mismatches + abs(la - lb)


def pairwise_discrepancies(cycles: Sequence[CycleLike]) -> np.ndarray:
    """Discrepancies of all unordered pairs ``i < j`` (row-major upper triangle).

    Matching seconds are counted per state with one-hot matrix products;
    the discrepancy is then ``max(l_i, l_j) - matches``.
    """
    n = len(cycles)
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    raw = [_states(c) for c in cycles]
    lengths = np.fromiter((len(s) for s in raw), dtype=np.int64, count=n)
    if lengths.min() == 0:
        raise ValueError("cycle discrepancy needs non-empty cycles")
    width = int(lengths.max())
    if int(lengths.min()) == width:
        mat = np.frombuffer(b"".join(raw), dtype=np.uint8).reshape(n, width)
    else:
        mat = np.zeros((n, width), dtype=np.uint8)
        for i, s in enumerate(raw):
            mat[i, :len(s)] = np.frombuffer(s, dtype=np.uint8)
    matches = np.zeros((n, n), dtype=np.float64)
    for code in np.unique(mat):
        if code == 0:
            continue
        onehot = (mat == code).astype(np.float64)
        matches += onehot @ onehot.T
    iu, ju = np.triu_indices(n, k=1)
    longest = np.maximum(lengths[iu], lengths[ju])
    return longest - np.rint(matches[iu, ju]).astype(np.int64)


def median_cycle_discrepancy(bucket: BucketLike) -> Optional[int]:
    """Lower median of the discrepancy over all pairs of the bucket's cycles."""
    cycles = _cycles(bucket)
    if len(cycles) < 2:
        return None
    d = pairwise_discrepancies(cycles)
    k = (len(d) - 1) // 2
    return int(np.partition(d, k)[k])


def green_length(cycle: CycleLike) -> int:
    """Total green seconds in a cycle, summed over all green runs."""
    return _states(cycle).count(b"G")


def median_green_length(bucket: BucketLike) -> Optional[int]:
    cycles = _cycles(bucket)
    if not cycles:
        return None
    return lower_median([green_length(c) for c in cycles])


def green_runs(timeline: bytes) -> list[tuple[int, int]]:
    """``(start, end)`` offsets of the maximal green runs in a timeline."""
    return [m.span() for m in _GREEN_RUN.finditer(timeline)]


def wait_times(sequence: Union[bytes, Sequence[Cycle]]) -> list[int]:
    """Non-green seconds between each green run and the next one in a timeline."""
    timeline = sequence if isinstance(sequence, (bytes, bytearray)) else sequence_states(sequence)
    runs = green_runs(timeline)
    return [runs[i + 1][0] - runs[i][1] for i in range(len(runs) - 1)]


def diversity(waits: Sequence[int]) -> Optional[Fraction]:
    if not waits:
        return None
    return Fraction(len(set(waits)), len(waits))


def pooled_wait_times(bucket: BucketLike) -> list[int]:
    out: list[int] = []
    for seq in _sequences(bucket):
        out.extend(wait_times(sequence_states(seq)))
    return out


def wait_time_diversity(bucket: BucketLike) -> Optional[Fraction]:
    """Distinct over total wait times, pooled across the bucket's sequences."""
    return diversity(pooled_wait_times(bucket))


def bucket_metrics(bucket: BucketLike) -> BucketMetrics:
    cycles = _cycles(bucket)
    if not cycles:
        return BucketMetrics()
    waits: list[int] = []
    green_phases = 0
    for seq in _sequences(bucket):
        runs = green_runs(sequence_states(seq))
        green_phases += len(runs)
        waits.extend(runs[i + 1][0] - runs[i][1] for i in range(len(runs) - 1))
    return BucketMetrics(
        median_cycle_discrepancy_s=median_cycle_discrepancy(cycles),
        wait_time_diversity=diversity(waits),
        median_green_length_s=median_green_length(cycles),
        cycle_count=len(cycles),
        green_phase_count=green_phases,
        wait_time_count=len(waits),
    )
