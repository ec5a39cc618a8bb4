"""Weekly 7x24 hourly-bucket rasterization and continuous-sequence building."""

from __future__ import annotations

from datetime import datetime, timezone
from typing import Iterable, Optional, Sequence, Union
from zoneinfo import ZoneInfo

from .model import Cycle, HourlyBucket

# 1970-01-01 was a Thursday (Monday == 0)
_EPOCH_WEEKDAY = 3


class SlotMapper:
    """Maps epoch seconds to (weekday, hour) in a timezone.

    Non-UTC zones are resolved once per quarter hour, the finest granularity
    of real-world UTC offsets.
    """

    def __init__(self, tz: Optional[str] = "UTC"):
        self.tz_name = tz or "UTC"
        self._utc = self.tz_name.upper() in ("UTC", "Z", "ETC/UTC")
        self._zone = None if self._utc else ZoneInfo(self.tz_name)
        self._cache: dict[int, tuple[int, int]] = {}

    def __call__(self, ts: int) -> tuple[int, int]:
        if self._utc:
            return (ts // 86400 + _EPOCH_WEEKDAY) % 7, ts // 3600 % 24
        key = ts // 900
        slot = self._cache.get(key)
        if slot is None:
            local = datetime.fromtimestamp(key * 900, tz=timezone.utc).astimezone(self._zone)
            slot = self._cache[key] = (local.weekday(), local.hour)
        return slot


def slot_of(ts: int, tz: Optional[str] = "UTC") -> tuple[int, int]:
    return SlotMapper(tz)(ts)


def build_sequences(bucket: Union[HourlyBucket, Sequence[Cycle]]) -> list[tuple[Cycle, ...]]:
    """Split a bucket's cycles into maximal runs of exactly adjacent cycles."""
    cycles = bucket.cycles if isinstance(bucket, HourlyBucket) else bucket
    sequences: list[tuple[Cycle, ...]] = []
    run: list[Cycle] = []
    for c in cycles:
        if run and run[-1].start + run[-1].length_s != c.start:
            sequences.append(tuple(run))
            run = []
        run.append(c)
    if run:
        sequences.append(tuple(run))
    return sequences


def sequence_states(sequence: Sequence[Cycle]) -> bytes:
    """Concatenated per-second timeline of a continuous sequence."""
    return b"".join(c.states for c in sequence)


def make_bucket(light_id: str, weekday: int, hour: int, cycles: Sequence[Cycle]) -> HourlyBucket:
    cycles = tuple(cycles)
    return HourlyBucket(light_id, weekday, hour, cycles, tuple(build_sequences(cycles)))


def bucketize(cycles: Iterable[Cycle], tz: Optional[str] = "UTC",
              light_id: Optional[str] = None) -> list[list[HourlyBucket]]:
    """Overlay a light's cycles onto a ``[weekday][hour]`` table by start instant."""
    mapper = tz if isinstance(tz, SlotMapper) else SlotMapper(tz)
    cells: list[list[Cycle]] = [[] for _ in range(168)]
    for c in cycles:
        if light_id is None:
            light_id = c.light_id
        wd, h = mapper(c.start)
        cells[wd * 24 + h].append(c)
    lid = light_id or ""
    table = []
    for wd in range(7):
        row = []
        for h in range(24):
            cell = cells[wd * 24 + h]
            # chronological order even if the input was not
            if any(cell[i].start > cell[i + 1].start for i in range(len(cell) - 1)):
                cell.sort(key=lambda c: c.start)
            row.append(make_bucket(lid, wd, h, cell))
        table.append(row)
    return table


def flatten(table: Sequence[Sequence[HourlyBucket]]) -> list[HourlyBucket]:
    return [b for row in table for b in row]
