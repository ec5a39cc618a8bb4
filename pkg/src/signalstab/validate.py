"""Cycle pruning rules, discontinuity accounting and the per-light exclusion rule."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .model import Cycle, SignalState

MAX_AMBER_S = 6
MAX_RED_AMBER_S = 2
DEFAULT_NEIGHBOR_WINDOW = 2
DEFAULT_MAX_REMOVED = 0.10

_LONG_AMBER = re.compile(b"A{%d}" % (MAX_AMBER_S + 1))
_LONG_RED_AMBER = re.compile(b"U{%d}" % (MAX_RED_AMBER_S + 1))

FORBIDDEN_TRANSITIONS = (
    (SignalState.RED, SignalState.AMBER),
    (SignalState.AMBER, SignalState.GREEN),
    (SignalState.AMBER, SignalState.RED_AMBER),
    (SignalState.GREEN, SignalState.RED_AMBER),
    (SignalState.RED_AMBER, SignalState.RED),
    (SignalState.RED_AMBER, SignalState.AMBER),
)
_FORBIDDEN_PAIRS = tuple(((a.code + b.code).encode(), a, b) for a, b in FORBIDDEN_TRANSITIONS)


class ErrorKind(str, Enum):
    AMBER_TOO_LONG = "amber_too_long"
    RED_AMBER_TOO_LONG = "red_amber_too_long"
    FORBIDDEN_TRANSITION = "forbidden_transition"
    LENGTH_OUTLIER = "length_outlier"


@dataclass(frozen=True)
class CycleError:
    kind: ErrorKind
    from_state: Optional[SignalState] = None
    to_state: Optional[SignalState] = None

    @property
    def label(self) -> str:
        if self.kind is ErrorKind.FORBIDDEN_TRANSITION:
            return f"{self.kind.value}:{self.from_state.value}->{self.to_state.value}"
        return self.kind.value


AMBER_TOO_LONG = CycleError(ErrorKind.AMBER_TOO_LONG)
RED_AMBER_TOO_LONG = CycleError(ErrorKind.RED_AMBER_TOO_LONG)
LENGTH_OUTLIER = CycleError(ErrorKind.LENGTH_OUTLIER)


def check_durations(cycle: Cycle) -> list[CycleError]:
    """Amber runs longer than 6 s and red-amber runs longer than 2 s.

    Runs cut by the cycle boundary are measured as seen within the cycle.
    """
    errors = []
    if _LONG_AMBER.search(cycle.states):
        errors.append(AMBER_TOO_LONG)
    if _LONG_RED_AMBER.search(cycle.states):
        errors.append(RED_AMBER_TOO_LONG)
    return errors


def check_transitions(cycle: Cycle) -> list[CycleError]:
    """One error per occurrence of a forbidden adjacent-second transition, in order."""
    states = cycle.states
    found = []
    for pair, a, b in _FORBIDDEN_PAIRS:
        pos = states.find(pair)
        while pos != -1:
            found.append((pos, CycleError(ErrorKind.FORBIDDEN_TRANSITION, a, b)))
            pos = states.find(pair, pos + 1)
    found.sort(key=lambda p: p[0])
    return [err for _, err in found]


def _lower_median(values: Sequence[int]) -> int:
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def check_length(cycle: Union[Cycle, int], neighbors: Sequence[Union[Cycle, int]]) -> list[CycleError]:
    """Flag cycles longer than 1.5x or shorter than 0.5x their neighbors' median length.

    Even neighbor counts use the lower middle value, as every median in the package does.
    """
    if not neighbors:
        return []
    length = cycle if isinstance(cycle, int) else cycle.length_s
    m = _lower_median([n if isinstance(n, int) else n.length_s for n in neighbors])
    if 2 * length > 3 * m or 2 * length < m:
        return [LENGTH_OUTLIER]
    return []


def cycle_errors(cycles: Sequence[Cycle], i: int, neighbor_window: int = DEFAULT_NEIGHBOR_WINDOW) -> list[CycleError]:
    """All rule violations of ``cycles[i]`` given its time-ordered light history."""
    c = cycles[i]
    neighbors = list(cycles[max(0, i - neighbor_window):i]) + list(cycles[i + 1:i + 1 + neighbor_window])
    return check_durations(c) + check_transitions(c) + check_length(c, neighbors)


@dataclass
class PruneResult:
    kept: list[Cycle]
    removed_count: int = 0
    error_histogram: Counter = field(default_factory=Counter)
    discontinuity_count: int = 0
    removed: list[tuple[Cycle, list[CycleError]]] = field(default_factory=list)

    def histogram_by_kind(self) -> dict[str, int]:
        out: Counter = Counter()
        for label, n in self.error_histogram.items():
            out[label.split(":", 1)[0]] += n
        return {k.value: out.get(k.value, 0) for k in ErrorKind}


def prune(cycles: Iterable[Cycle], neighbor_window: int = DEFAULT_NEIGHBOR_WINDOW) -> PruneResult:
    """Drop every cycle with at least one rule violation.

    The length rule compares against the reconstructed (unpruned) neighbors,
    so the outcome does not depend on the order in which cycles are checked.
    A removal counts as a discontinuity when both its predecessor and
    successor are kept and exactly adjacent to it.
    """
    cycles = list(cycles)
    lengths = [c.length_s for c in cycles]
    n = len(cycles)
    bad = [False] * n
    result = PruneResult(kept=[])
    hist = result.error_histogram
    w = neighbor_window
    for i, c in enumerate(cycles):
        errors = check_durations(c) + check_transitions(c)
        if w > 0:
            neigh = lengths[max(0, i - w):i] + lengths[i + 1:i + 1 + w]
            if neigh:
                errors += check_length(lengths[i], neigh)
        if errors:
            bad[i] = True
            for e in errors:
                hist[e.label] += 1
            result.removed.append((c, errors))
        else:
            result.kept.append(c)
    result.removed_count = len(result.removed)
    for i in range(1, n - 1):
        if bad[i] and not bad[i - 1] and not bad[i + 1]:
            if cycles[i - 1].end == cycles[i].start and cycles[i].end == cycles[i + 1].start:
                result.discontinuity_count += 1
    return result


def is_excluded(reconstructed: int, removed: int, max_removed: float = DEFAULT_MAX_REMOVED) -> bool:
    if reconstructed <= 0:
        return True
    return Fraction(removed, reconstructed) > Fraction(str(max_removed))


def exclude_lights(stats: Mapping[str, Union[tuple[int, int], Mapping[str, int]]],
                   max_removed: float = DEFAULT_MAX_REMOVED) -> set[str]:
    """Lights whose removed share of reconstructed cycles exceeds ``max_removed``.

    ``stats`` maps light id to ``(reconstructed, removed)`` or a mapping with
    those two keys.
    """
    excluded = set()
    for light, s in stats.items():
        if isinstance(s, Mapping):
            rec, rem = s["reconstructed"], s["removed"]
        else:
            rec, rem = s
        if is_excluded(rec, rem, max_removed):
            excluded.add(light)
    return excluded


def validation_report(light_id: str, reconstructed: int, result: PruneResult,
                      max_removed: float = DEFAULT_MAX_REMOVED) -> dict:
    """JSON-ready per-light validation record."""
    ratio = result.removed_count / reconstructed if reconstructed else None
    return {
        "light_id": light_id,
        "reconstructed": reconstructed,
        "removed": result.removed_count,
        "removal_ratio": ratio,
        "errors": result.histogram_by_kind(),
        "transitions": {k: v for k, v in sorted(result.error_histogram.items()) if ":" in k},
        "discontinuities": result.discontinuity_count,
        "excluded": is_excluded(reconstructed, result.removed_count, max_removed),
    }
