"""Cycle reconstruction from a single light's ordered observation stream."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Iterator, Optional

from .model import Cycle, Observation, ObsKind

DEFAULT_MAX_CYCLE_S = 600


@dataclass
class ReconstructStats:
    cycle_starts: int = 0
    reconstructed: int = 0
    skipped_no_state: int = 0
    skipped_too_long: int = 0
    skipped_seconds: int = 0
    duplicate_starts: int = 0
    state_changes: int = 0
    detector_changes: int = 0
    program_changes: int = 0

    @property
    def skipped(self) -> int:
        return self.skipped_no_state + self.skipped_too_long

    def merge(self, other: "ReconstructStats") -> None:
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["skipped"] = self.skipped
        return d


class Reconstructor:
    """Incremental cycle builder; feed observations of one light in time order.

    The state shown at a cycle's first second is the state carried over from
    the previous cycle, overridden by a state change in that same second.
    Spans between two cycle starts are dropped when no state is known at the
    opening start or when they exceed ``max_cycle_s``.
    """

    def __init__(self, light_id: str, max_cycle_s: int = DEFAULT_MAX_CYCLE_S,
                 stats: Optional[ReconstructStats] = None):
        self.light_id = light_id
        self.max_cycle_s = max_cycle_s
        self.stats = stats if stats is not None else ReconstructStats()
        self._state: Optional[bytes] = None
        self._program: Optional[str] = None
        self._t0: Optional[int] = None
        self._start_state: Optional[bytes] = None
        self._changes: list[tuple[int, bytes]] = []

    def feed(self, obs: Observation) -> Optional[Cycle]:
        kind = obs.kind
        ts = obs.timestamp
        if kind is ObsKind.STATE_CHANGE:
            self.stats.state_changes += 1
            code = obs.payload.code.encode()
            self._state = code
            if self._t0 is not None:
                if ts <= self._t0:
                    self._start_state = code
                else:
                    self._changes.append((ts, code))
            return None
        if kind is ObsKind.CYCLE_START:
            return self._boundary(ts)
        if kind is ObsKind.PROGRAM_CHANGE:
            self.stats.program_changes += 1
            self._program = obs.payload
        else:
            self.stats.detector_changes += 1
        return None

    def _boundary(self, t1: int) -> Optional[Cycle]:
        stats = self.stats
        stats.cycle_starts += 1
        t0 = self._t0
        if t0 is not None and t1 == t0:
            stats.duplicate_starts += 1
            return None
        cycle = None
        if t0 is not None:
            span = t1 - t0
            if self._start_state is None:
                stats.skipped_no_state += 1
                stats.skipped_seconds += span
            elif span > self.max_cycle_s:
                stats.skipped_too_long += 1
                stats.skipped_seconds += span
            else:
                parts = []
                cur = self._start_state
                pos = t0
                for t, code in self._changes:
                    parts.append(cur * (t - pos))
                    cur, pos = code, t
                parts.append(cur * (t1 - pos))
                cycle = Cycle(self.light_id, t0, b"".join(parts), self._program)
                stats.reconstructed += 1
        self._t0 = t1
        self._start_state = self._state
        self._changes = []
        return cycle


def iter_cycles(observations: Iterable[Observation], light_id: Optional[str] = None,
                max_cycle_s: int = DEFAULT_MAX_CYCLE_S,
                stats: Optional[ReconstructStats] = None) -> Iterator[Cycle]:
    rec: Optional[Reconstructor] = None
    if light_id is not None:
        rec = Reconstructor(light_id, max_cycle_s, stats)
    for obs in observations:
        if rec is None:
            rec = Reconstructor(obs.light_id, max_cycle_s, stats)
        cycle = rec.feed(obs)
        if cycle is not None:
            yield cycle


def reconstruct_cycles(observations: Iterable[Observation],
                       max_cycle_s: int = DEFAULT_MAX_CYCLE_S) -> tuple[list[Cycle], ReconstructStats]:
    """Reconstruct all cycles of one light; trailing data after the last start forms no cycle."""
    stats = ReconstructStats()
    cycles = list(iter_cycles(observations, max_cycle_s=max_cycle_s, stats=stats))
    return cycles, stats
