"""Parsing of observation record files and per-light reordering.

Record format, one per line::

    epoch_seconds|light_id|kind|payload

``kind`` is ``S`` (state change, payload = state name), ``C`` (cycle start,
empty payload), ``P`` (program change, payload = program id) or ``D``
(detector change, payload = ``0``/``1``). Files may be gzip-compressed.
"""

from __future__ import annotations

import bisect
import gzip
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, Optional, Union

from .model import Observation, ObsKind, SignalState

log = logging.getLogger(__name__)

DEFAULT_REORDER_WINDOW_S = 300
MAX_KEPT_DIAGNOSTICS = 100

_STATE_NAMES = {s.value.encode(): s for s in SignalState}
_STATE_NAMES.update({b"redamber": SignalState.RED_AMBER, b"red-amber": SignalState.RED_AMBER})


@dataclass
class IngestStats:
    lines: int = 0
    observations: int = 0
    malformed: int = 0
    late_dropped: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def diagnose(self, message: str) -> None:
        if len(self.diagnostics) < MAX_KEPT_DIAGNOSTICS:
            self.diagnostics.append(message)
        log.debug(message)


def _parse_epoch(raw: bytes) -> int:
    try:
        return int(raw)
    except ValueError:
        value = float(raw)  # sub-second input: truncate toward zero
        if not math.isfinite(value):
            raise ValueError("non-finite timestamp") from None
        return int(value)


def parse_records(source: Iterable[bytes], stats: Optional[IngestStats] = None,
                  origin: str = "<input>") -> Iterator[Observation]:
    """Yield observations in file order; malformed lines are counted and skipped."""
    if stats is None:
        stats = IngestStats()
    ids: dict[bytes, str] = {}
    state_change = ObsKind.STATE_CHANGE
    cycle_start = ObsKind.CYCLE_START
    lineno = 0
    for lineno, line in enumerate(source, 1):
        line = line.rstrip(b"\r\n")
        if not line or line.startswith(b"#"):
            continue
        stats.lines += 1
        parts = line.split(b"|")
        if len(parts) != 4:
            stats.malformed += 1
            stats.diagnose(f"{origin}:{lineno}: expected 4 fields, got {len(parts)}")
            continue
        raw_ts, raw_id, kind, payload = parts
        try:
            ts = _parse_epoch(raw_ts)
        except ValueError:
            stats.malformed += 1
            stats.diagnose(f"{origin}:{lineno}: bad timestamp {raw_ts!r}")
            continue
        if not raw_id:
            stats.malformed += 1
            stats.diagnose(f"{origin}:{lineno}: empty light id")
            continue
        light_id = ids.get(raw_id)
        if light_id is None:
            light_id = ids[raw_id] = raw_id.decode("utf-8", "replace")

        if kind == b"S":
            state = _STATE_NAMES.get(payload.strip().lower())
            if state is None:
                stats.malformed += 1
                stats.diagnose(f"{origin}:{lineno}: unknown state {payload!r}")
                continue
            obs = Observation(light_id, ts, state_change, state)
        elif kind == b"C":
            obs = Observation(light_id, ts, cycle_start, None)
        elif kind == b"P":
            if not payload:
                stats.malformed += 1
                stats.diagnose(f"{origin}:{lineno}: empty program id")
                continue
            obs = Observation(light_id, ts, ObsKind.PROGRAM_CHANGE, payload.decode("utf-8", "replace"))
        elif kind == b"D":
            if payload not in (b"0", b"1"):
                stats.malformed += 1
                stats.diagnose(f"{origin}:{lineno}: bad detector payload {payload!r}")
                continue
            obs = Observation(light_id, ts, ObsKind.DETECTOR_CHANGE, payload == b"1")
        else:
            stats.malformed += 1
            stats.diagnose(f"{origin}:{lineno}: unknown kind {kind!r}")
            continue
        stats.observations += 1
        yield obs


def format_record(obs: Observation) -> str:
    kind = obs.kind
    if kind is ObsKind.STATE_CHANGE:
        payload = obs.payload.value
    elif kind is ObsKind.DETECTOR_CHANGE:
        payload = "1" if obs.payload else "0"
    elif kind is ObsKind.PROGRAM_CHANGE:
        payload = obs.payload
    else:
        payload = ""
    return f"{obs.timestamp}|{obs.light_id}|{kind.value}|{payload}\n"


def serialize_records(observations: Iterable[Observation]) -> bytes:
    return "".join(format_record(o) for o in observations).encode("utf-8")


def write_records(observations: Iterable[Observation], out: io.TextIOBase) -> int:
    n = 0
    for obs in observations:
        out.write(format_record(obs))
        n += 1
    return n


def open_records(path: Union[str, Path]) -> BinaryIO:
    """Open a record file for binary line iteration, transparently gunzipping."""
    fh = open(path, "rb")
    if fh.peek(2)[:2] == b"\x1f\x8b":
        fh.close()
        return gzip.open(path, "rb")  # type: ignore[return-value]
    return fh


def read_files(paths: Iterable[Union[str, Path]], stats: Optional[IngestStats] = None) -> Iterator[Observation]:
    """Parse several record files in order as one stream."""
    if stats is None:
        stats = IngestStats()
    for path in paths:
        with open_records(path) as fh:
            yield from parse_records(fh, stats, origin=str(path))


def _rank(obs: Observation) -> int:
    # cycle starts sort before anything else in the same second
    return 0 if obs.kind is ObsKind.CYCLE_START else 1


class Partitioner:
    """Reorders a mixed stream into per-light, time-ordered streams.

    Each light keeps a sorted buffer spanning roughly the reorder window
    behind its high-water mark. Records older than ``high_water - window``
    are dropped as late.
    """

    def __init__(self, window_s: int = DEFAULT_REORDER_WINDOW_S, stats: Optional[IngestStats] = None):
        self.window_s = window_s
        self.stats = stats if stats is not None else IngestStats()
        self._buffers: dict[str, list] = {}
        self._high_water: dict[str, int] = {}
        self._seq = 0

    def push(self, obs: Observation) -> list[Observation]:
        """Accept one observation; return any observations that became final."""
        light = obs.light_id
        ts = obs.timestamp
        hw = self._high_water.get(light)
        if hw is None:
            self._high_water[light] = hw = ts
            buf = self._buffers[light] = []
        else:
            buf = self._buffers[light]
            if hw - ts > self.window_s:
                self.stats.late_dropped += 1
                self.stats.diagnose(f"{light}: record at {ts} is {hw - ts}s behind high-water mark, dropped")
                return []
            if ts > hw:
                self._high_water[light] = hw = ts
        self._seq += 1
        key = (ts, _rank(obs), self._seq, obs)
        if not buf or key[:3] > buf[-1][:3]:
            buf.append(key)
        else:
            bisect.insort(buf, key)
        cutoff = hw - self.window_s
        if buf[0][0] < cutoff - self.window_s:
            cut = bisect.bisect_left(buf, (cutoff,))
            done = [k[3] for k in buf[:cut]]
            del buf[:cut]
            return done
        return []

    def flush_light(self, light: str) -> list[Observation]:
        buf = self._buffers.get(light, [])
        done = [k[3] for k in buf]
        buf.clear()
        return done

    def flush(self) -> Iterator[tuple[str, list[Observation]]]:
        for light in list(self._buffers):
            yield light, self.flush_light(light)

    @property
    def lights(self) -> list[str]:
        return list(self._buffers)


def partition_by_light(observations: Iterable[Observation], window_s: int = DEFAULT_REORDER_WINDOW_S,
                       stats: Optional[IngestStats] = None) -> dict[str, list[Observation]]:
    """Collect a mixed stream into per-light lists sorted by timestamp."""
    part = Partitioner(window_s, stats)
    out: dict[str, list[Observation]] = {}
    for obs in observations:
        done = part.push(obs)
        if done:
            out.setdefault(obs.light_id, []).extend(done)
    for light, rest in part.flush():
        out.setdefault(light, []).extend(rest)
    return out
