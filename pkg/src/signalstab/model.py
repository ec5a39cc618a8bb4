"""Shared domain vocabulary: signal states, observations, cycles, buckets, metrics.

Timestamps are integer UTC epoch seconds throughout. Cycle states are kept as
``bytes`` holding one ASCII state code per second (see ``SignalState.code``),
which keeps city-scale recordings compact and makes run/transition scans
cheap.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence


class SignalState(str, Enum):
    GREEN = "green"
    RED = "red"
    AMBER = "amber"
    RED_AMBER = "red_amber"
    DARK = "dark"

    @property
    def code(self) -> str:
        return _STATE_TO_CODE[self]

    @property
    def byte(self) -> int:
        return ord(_STATE_TO_CODE[self])

    @classmethod
    def from_code(cls, code: str) -> "SignalState":
        return _CODE_TO_STATE[code]

    @classmethod
    def parse(cls, name: str) -> "SignalState":
        """Parse a state name, accepting the common spellings of red-amber."""
        key = name.strip().lower().replace("-", "_")
        if key == "redamber":
            key = "red_amber"
        return cls(key)


_STATE_TO_CODE = {
    SignalState.GREEN: "G",
    SignalState.RED: "R",
    SignalState.AMBER: "A",
    SignalState.RED_AMBER: "U",
    SignalState.DARK: "D",
}
_CODE_TO_STATE = {v: k for k, v in _STATE_TO_CODE.items()}
STATE_CODES = frozenset(ord(c) for c in _CODE_TO_STATE)

GREEN = ord("G")
RED = ord("R")
AMBER = ord("A")
RED_AMBER = ord("U")
DARK = ord("D")


def encode_states(states: Iterable[SignalState]) -> bytes:
    return "".join(s.code for s in states).encode("ascii")


def decode_states(states: bytes) -> tuple[SignalState, ...]:
    return tuple(_CODE_TO_STATE[chr(b)] for b in states)


_RUN = re.compile(rb"(.)\1*")
_RLE_TOKEN = re.compile(r"([GRAUD])([1-9]\d*)")


def rle_encode(states: bytes) -> str:
    """``b"GGGRR"`` -> ``"G3R2"``."""
    return "".join(f"{chr(m.group(1)[0])}{m.end() - m.start()}" for m in _RUN.finditer(states))


def rle_decode(text: str) -> bytes:
    out = []
    pos = 0
    for m in _RLE_TOKEN.finditer(text):
        if m.start() != pos:
            raise ValueError(f"malformed run-length string: {text!r}")
        out.append(m.group(1) * int(m.group(2)))
        pos = m.end()
    if pos != len(text):
        raise ValueError(f"malformed run-length string: {text!r}")
    return "".join(out).encode("ascii")


def to_instant(ts: int) -> datetime:
    return datetime.fromtimestamp(ts, tz=timezone.utc)


class ObsKind(str, Enum):
    STATE_CHANGE = "S"
    CYCLE_START = "C"
    PROGRAM_CHANGE = "P"
    DETECTOR_CHANGE = "D"


@dataclass(frozen=True, slots=True)
class Observation:
    """One broker event for one signal.

    ``payload`` depends on ``kind``: a SignalState for state changes, the
    program id for program changes, the occupancy flag for detector changes
    and None for cycle starts.
    """

    light_id: str
    timestamp: int
    kind: ObsKind
    payload: Any = None

    @classmethod
    def state_change(cls, light_id: str, ts: int, state: SignalState) -> "Observation":
        return cls(light_id, ts, ObsKind.STATE_CHANGE, state)

    @classmethod
    def cycle_start(cls, light_id: str, ts: int) -> "Observation":
        return cls(light_id, ts, ObsKind.CYCLE_START, None)

    @classmethod
    def program_change(cls, light_id: str, ts: int, program_id: str) -> "Observation":
        return cls(light_id, ts, ObsKind.PROGRAM_CHANGE, program_id)

    @classmethod
    def detector_change(cls, light_id: str, ts: int, occupied: bool) -> "Observation":
        return cls(light_id, ts, ObsKind.DETECTOR_CHANGE, occupied)

    @property
    def instant(self) -> datetime:
        return to_instant(self.timestamp)

    def to_dict(self) -> dict:
        payload = self.payload
        if isinstance(payload, SignalState):
            payload = payload.value
        return {"light_id": self.light_id, "timestamp": self.timestamp,
                "kind": self.kind.value, "payload": payload}

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        kind = ObsKind(d["kind"])
        payload = d.get("payload")
        if kind is ObsKind.STATE_CHANGE:
            payload = SignalState(payload)
        elif kind is ObsKind.DETECTOR_CHANGE:
            payload = bool(payload)
        elif kind is ObsKind.CYCLE_START:
            payload = None
        return cls(d["light_id"], int(d["timestamp"]), kind, payload)


@dataclass(frozen=True, slots=True)
class Cycle:
    """A reconstructed cycle: one state code per second starting at ``start``."""

    light_id: str
    start: int
    states: bytes
    program_id: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.states:
            raise ValueError("a cycle needs at least one second of states")

    @classmethod
    def from_states(cls, light_id: str, start: int, states: Sequence[SignalState],
                    program_id: Optional[str] = None) -> "Cycle":
        return cls(light_id, start, encode_states(states), program_id)

    @property
    def length_s(self) -> int:
        return len(self.states)

    @property
    def end(self) -> int:
        return self.start + len(self.states)

    @property
    def signal_states(self) -> tuple[SignalState, ...]:
        return decode_states(self.states)

    def to_dict(self) -> dict:
        return {"light_id": self.light_id, "start": self.start,
                "states": rle_encode(self.states), "program_id": self.program_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Cycle":
        return cls(d["light_id"], int(d["start"]), rle_decode(d["states"]), d.get("program_id"))


@dataclass(frozen=True)
class HourlyBucket:
    """All cycles of one light starting in one (weekday, hour) cell.

    ``sequences`` holds the maximal runs of exactly adjacent cycles.
    """

    light_id: str
    weekday: int
    hour: int
    cycles: tuple[Cycle, ...] = ()
    sequences: tuple[tuple[Cycle, ...], ...] = ()

    @property
    def slot(self) -> int:
        return self.weekday * 24 + self.hour


@dataclass(frozen=True)
class BucketMetrics:
    median_cycle_discrepancy_s: Optional[int] = None
    wait_time_diversity: Optional[Fraction] = None
    median_green_length_s: Optional[int] = None
    cycle_count: int = 0
    green_phase_count: int = 0
    wait_time_count: int = 0

    def to_dict(self) -> dict:
        wtd = self.wait_time_diversity
        return {
            "median_cycle_discrepancy_s": self.median_cycle_discrepancy_s,
            "wait_time_diversity": None if wtd is None else f"{wtd.numerator}/{wtd.denominator}",
            "median_green_length_s": self.median_green_length_s,
            "cycle_count": self.cycle_count,
            "green_phase_count": self.green_phase_count,
            "wait_time_count": self.wait_time_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BucketMetrics":
        wtd = d.get("wait_time_diversity")
        return cls(
            median_cycle_discrepancy_s=d.get("median_cycle_discrepancy_s"),
            wait_time_diversity=None if wtd is None else Fraction(wtd),
            median_green_length_s=d.get("median_green_length_s"),
            cycle_count=d.get("cycle_count", 0),
            green_phase_count=d.get("green_phase_count", 0),
            wait_time_count=d.get("wait_time_count", 0),
        )


WEEK_SLOTS = 7 * 24
WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
