"""Synthetic signal programs at the three short-term adaptivity levels.

Fixed-time programs repeat one cycle layout. Partially adaptive programs
keep the cycle length and move/stretch the green window from the demand
counted during the previous cycle. Fully adaptive programs rest in green and
serve Poisson demand requests with red intervals bounded by the minimum and
maximum green times; their cycle starts are a free-running clock.

Cycle layout for levels 1 and 2 (seconds within the cycle)::

    red | red-amber | green window | amber | red
"""

from __future__ import annotations

import bisect
import heapq
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields, replace
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .model import Cycle, Observation, ObsKind, SignalState

G, R, A, U = SignalState.GREEN, SignalState.RED, SignalState.AMBER, SignalState.RED_AMBER


class SpecError(ValueError):
    pass


class Level(IntEnum):
    FIXED_TIME = 1
    PARTIALLY_ADAPTIVE = 2
    FULLY_ADAPTIVE = 3

    @classmethod
    def parse(cls, value: Union[int, str, "Level"]) -> "Level":
        if isinstance(value, str) and not value.isdigit():
            return cls[value.strip().upper().replace("-", "_")]
        return cls(int(value))


@dataclass(frozen=True)
class ProgramSpec:
    """Simulated signal program.

    ``cycle_length_s`` is the program cycle for levels 1-2 and the marker
    period for level 3. ``extension_range_s`` bounds the green length change
    and ``shift_s`` the green start shift of level 2 programs. At level 3,
    ``min_green_s`` is the minimum green before a requested switch and
    ``max_green_s`` caps each demand service interval.
    """

    light_id: str = "tl_sim"
    level: Level = Level.FIXED_TIME
    cycle_length_s: int = 60
    green_offset_s: int = 10
    green_length_s: int = 25
    extension_range_s: tuple[int, int] = (0, 0)
    shift_s: int = 0
    min_green_s: int = 5
    max_green_s: int = 40
    demand_rate: float = 0.0
    demand_schedule: Optional[tuple[float, ...]] = None
    amber_s: int = 3
    red_amber_s: int = 1
    uses_amber: bool = True
    program_id: Optional[str] = None
    detectors: bool = True
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ProgramSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown program spec keys: {sorted(unknown)}")
        kw = dict(d)
        if "level" in kw:
            try:
                kw["level"] = Level.parse(kw["level"])
            except (KeyError, ValueError) as exc:
                raise SpecError(f"bad level {d['level']!r}") from exc
        if "extension_range_s" in kw:
            kw["extension_range_s"] = tuple(kw["extension_range_s"])
        if kw.get("demand_schedule") is not None:
            kw["demand_schedule"] = tuple(float(x) for x in kw["demand_schedule"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level"] = int(self.level)
        d["extension_range_s"] = list(self.extension_range_s)
        if self.demand_schedule is not None:
            d["demand_schedule"] = list(self.demand_schedule)
        return d

    @property
    def amber(self) -> int:
        return self.amber_s if self.uses_amber else 0

    @property
    def red_amber(self) -> int:
        return self.red_amber_s if self.uses_amber else 0

    def validate(self) -> None:
        if self.min_green_s < 1:
            raise SpecError("min_green_s must be at least 1")
        if self.cycle_length_s < 1:
            raise SpecError("cycle_length_s must be positive")
        if self.uses_amber:
            if not 1 <= self.amber_s <= 6:
                raise SpecError("amber_s must be within 1..6")
            if not 0 <= self.red_amber_s <= 2:
                raise SpecError("red_amber_s must be within 0..2")
        if self.demand_rate < 0 or any(r < 0 for r in self.demand_schedule or ()):
            raise SpecError("demand rates must be non-negative")
        if self.demand_schedule is not None and len(self.demand_schedule) not in (24, 168):
            raise SpecError("demand_schedule needs 24 (hourly) or 168 (weekly) entries")
        if self.level == Level.FULLY_ADAPTIVE:
            if self.max_green_s < self.min_green_s:
                raise SpecError("max_green_s must not be below min_green_s")
            return
        lo, hi = self.extension_range_s
        if lo > hi:
            raise SpecError("extension_range_s must be [low, high]")
        if self.level == Level.FIXED_TIME and (lo, hi, self.shift_s) != (0, 0, 0):
            raise SpecError("fixed-time programs take no extension or shift")
        if self.shift_s < 0:
            raise SpecError("shift_s must be non-negative")
        if self.green_length_s + lo < self.min_green_s:
            raise SpecError("shortest green window is below min_green_s")
        if self.green_offset_s - self.shift_s - self.red_amber < 0:
            raise SpecError("green window (with shift and red-amber) starts before the cycle")
        if self.green_offset_s + self.shift_s + self.green_length_s + hi + self.amber > self.cycle_length_s:
            raise SpecError("green window (with extension and amber) does not fit in the cycle")

    def rate_at(self, ts: int) -> float:
        """Demand in arrivals per hour at epoch second ``ts`` (UTC hour of day/week)."""
        sched = self.demand_schedule
        if sched is None:
            return self.demand_rate
        hour = ts // 3600 % 24
        if len(sched) == 24:
            return sched[hour]
        weekday = (ts // 86400 + 3) % 7
        return sched[weekday * 24 + hour]


def cycle_layout(spec: ProgramSpec, shift: int = 0, ext: int = 0) -> bytes:
    """Per-second states of one level 1/2 cycle."""
    g0 = spec.green_offset_s + shift
    g1 = g0 + spec.green_length_s + ext
    ra, am = spec.red_amber, spec.amber
    parts = [R.code * (g0 - ra), U.code * ra, G.code * (g1 - g0), A.code * am,
             R.code * (spec.cycle_length_s - g1 - am)]
    return "".join(parts).encode("ascii")


def poisson_arrivals(spec: ProgramSpec, start: int, end: int, rng: random.Random) -> list[int]:
    """Arrival seconds in ``[start, end)`` from a piecewise-constant hourly rate."""
    out = []
    seg = start
    while seg < end:
        seg_end = min(end, (seg // 3600 + 1) * 3600)
        rate = spec.rate_at(seg) / 3600.0
        if rate > 0:
            t = float(seg)
            while True:
                t += rng.expovariate(rate)
                if t >= seg_end:
                    break
                out.append(int(t))
        seg = seg_end
    return out


def demand_fraction(count: int, mean: float) -> float:
    """Monotone map of a demand count to [0, 1); 0.5 at the expected count."""
    if count + mean <= 0:
        return 0.0
    return count / (count + mean)


def level2_adjustment(spec: ProgramSpec, count: int, mean: float) -> tuple[int, int]:
    """(shift, extension) of the green window for one cycle from its demand count."""
    lo, hi = spec.extension_range_s
    f = demand_fraction(count, mean)
    ext = lo + int(math.floor((hi - lo) * f + 0.5))
    shift = 0
    if mean > 0 and spec.shift_s:
        # more demand starts green earlier
        shift = -int(math.floor(spec.shift_s * (2 * f - 1) + 0.5))
    return shift, ext


def _emit_timeline(light: str, segments: Iterable[tuple[int, bytes]], end: int,
                   last: Optional[int] = None) -> Iterator[Observation]:
    """State changes for consecutive (start, states) segments, clipped at ``end``."""
    sc = ObsKind.STATE_CHANGE
    for t0, states in segments:
        pos = 0
        n = len(states)
        while pos < n:
            code = states[pos]
            run_end = pos
            while run_end < n and states[run_end] == code:
                run_end += 1
            t = t0 + pos
            if t >= end:
                return
            if code != last:
                yield Observation(light, t, sc, SignalState.from_code(chr(code)))
                last = code
            pos = run_end


def _signal_stream(spec: ProgramSpec, start: int, duration_s: int,
                   arrivals: Sequence[int], rng: random.Random) -> Iterator[Observation]:
    light = spec.light_id
    end = start + duration_s
    L = spec.cycle_length_s
    if spec.program_id is not None:
        yield Observation(light, start, ObsKind.PROGRAM_CHANGE, spec.program_id)

    if spec.level == Level.FULLY_ADAPTIVE:
        changes = _level3_changes(spec, start, end, arrivals, rng)
        markers = range(start, end + 1, L)
        cs = ObsKind.CYCLE_START
        sc = ObsKind.STATE_CHANGE
        ci = 0
        for m in markers:
            while ci < len(changes) and changes[ci][0] < m:
                yield Observation(light, changes[ci][0], sc, changes[ci][1])
                ci += 1
            yield Observation(light, m, cs, None)
        for t, s in changes[ci:]:
            if t < end:
                yield Observation(light, t, sc, s)
        return

    base = cycle_layout(spec)
    ai = 0
    last: Optional[int] = None
    cs = ObsKind.CYCLE_START
    prev_count = 0
    for t0 in range(start, end + 1, L):
        yield Observation(light, t0, cs, None)
        if t0 >= end:
            break
        if spec.level == Level.PARTIALLY_ADAPTIVE:
            mean = spec.rate_at(t0) * L / 3600.0
            states = cycle_layout(spec, *level2_adjustment(spec, prev_count, mean))
            n = 0
            while ai < len(arrivals) and arrivals[ai] < t0 + L:
                n += 1
                ai += 1
            prev_count = n
        else:
            states = base
        for obs in _emit_timeline(light, [(t0, states)], end, last):
            last = obs.payload.byte
            yield obs


def _level3_changes(spec: ProgramSpec, start: int, end: int, arrivals: Sequence[int],
                    rng: random.Random) -> list[tuple[int, SignalState]]:
    """State changes of a demand-served, green-resting signal."""
    clearance = [rng.randint(spec.min_green_s, spec.max_green_s) for _ in arrivals]
    changes: list[tuple[int, SignalState]] = [(start, G)]
    green_start = start
    i = 0
    n = len(arrivals)
    while i < n:
        switch = max(arrivals[i], green_start + spec.min_green_s)
        if switch >= end:
            break
        red_start = switch + spec.amber
        if spec.amber:
            changes.append((switch, A))
        changes.append((red_start, R))
        serve_end = red_start
        cap = red_start + spec.max_green_s
        # everything queued by the time red starts, then arrivals during service
        while i < n and arrivals[i] <= red_start:
            serve_end = max(serve_end, red_start + clearance[i])
            i += 1
        serve_end = min(serve_end, cap)
        while i < n and arrivals[i] < serve_end:
            serve_end = min(max(serve_end, arrivals[i] + clearance[i]), cap)
            i += 1
        if spec.red_amber:
            changes.append((serve_end, U))
        green_start = serve_end + spec.red_amber
        changes.append((green_start, G))
        if green_start >= end:
            break
    return [c for c in changes if c[0] < end]


def _detector_stream(light: str, arrivals: Sequence[int], end: int) -> Iterator[Observation]:
    """One occupancy pulse per second with at least one arrival."""
    dc = ObsKind.DETECTOR_CHANGE
    for a in sorted(set(arrivals)):
        yield Observation(light, a, dc, True)
        if a + 1 < end:
            yield Observation(light, a + 1, dc, False)


def _order_key(obs: Observation) -> tuple[int, int]:
    return obs.timestamp, 0 if obs.kind is ObsKind.CYCLE_START else 1


def simulate(spec: ProgramSpec, start: int, duration_s: int) -> Iterator[Observation]:
    """Observation stream of one simulated light over ``[start, start + duration_s)``.

    A closing cycle start is emitted at ``start + duration_s`` when it falls
    on a cycle boundary, so every complete cycle is reconstructible.
    """
    spec.validate()
    if spec.level != Level.FULLY_ADAPTIVE and duration_s < spec.cycle_length_s:
        raise SpecError("duration must cover at least one cycle")
    if duration_s < 0:
        raise SpecError("duration must be non-negative")
    rng = random.Random(f"signalstab:{spec.seed}:{spec.light_id}")
    end = start + duration_s
    arrivals = poisson_arrivals(spec, start, end, rng) if spec.level != Level.FIXED_TIME else []
    signal = _signal_stream(spec, start, duration_s, arrivals, rng)
    if not (spec.detectors and arrivals):
        return signal
    return heapq.merge(signal, _detector_stream(spec.light_id, arrivals, end), key=_order_key)


def simulate_fleet(specs: Sequence[ProgramSpec], start: int, duration_s: int) -> Iterator[Observation]:
    """Time-ordered merge of several simulated lights (stable by spec order)."""
    return heapq.merge(*(simulate(s, start, duration_s) for s in specs), key=_order_key)


def load_spec_file(path: Union[str, Path]) -> list[ProgramSpec]:
    """Read a JSON spec file: one program object or ``{"lights": [...]}``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    items = doc["lights"] if isinstance(doc, dict) and "lights" in doc else doc
    if isinstance(items, dict):
        items = [items]
    specs = [ProgramSpec.from_dict(d) for d in items]
    ids = [s.light_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SpecError("light ids in a spec file must be unique")
    for s in specs:
        s.validate()
    return specs


# --------------------------------------------------------------------------- faults

LONG_AMBER_S = 8


@dataclass(frozen=True)
class ErrorModel:
    p_drop_state: float = 0.0
    p_drop_cyclestart: float = 0.0
    p_long_amber: float = 0.0
    p_forbidden_transition: float = 0.0
    long_amber_s: int = LONG_AMBER_S
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("p_drop_state", "p_drop_cyclestart", "p_long_amber", "p_forbidden_transition"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SpecError(f"{name} must be within [0, 1]")
        if self.long_amber_s <= 6:
            raise SpecError("long_amber_s must exceed the 6 s amber limit")

    @classmethod
    def from_dict(cls, d: dict) -> "ErrorModel":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SpecError(f"unknown error model keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Fault:
    fault: str
    light_id: str
    time: int

    def to_dict(self) -> dict:
        return asdict(self)


DROP_STATE = "drop_state"
DROP_CYCLE_START = "drop_cycle_start"
LONG_AMBER = "long_amber"
FORBIDDEN_TRANSITION = "forbidden_transition"


def _inject_light(obs: list[Observation], model: ErrorModel, rng: random.Random,
                  ledger: list[Fault]) -> list[Observation]:
    light = obs[0].light_id
    sc, cs = ObsKind.STATE_CHANGE, ObsKind.CYCLE_START
    obs = list(obs)

    def next_index(i: int, kind: ObsKind) -> Optional[int]:
        for j in range(i + 1, len(obs)):
            if obs[j].kind is kind:
                return j
        return None

    def prev_index(i: int, kind: ObsKind) -> Optional[int]:
        for j in range(i - 1, -1, -1):
            if obs[j].kind is kind:
                return j
        return None

    # green -> (amber | red) becomes green -> red-amber -> (amber | red)
    if model.p_forbidden_transition > 0:
        prev_state = None
        i = 0
        while i < len(obs):
            o = obs[i]
            if o.kind is sc:
                if prev_state is G and o.payload in (A, R) and rng.random() < model.p_forbidden_transition:
                    j = next_index(i, sc)
                    t = o.timestamp
                    if j is None or obs[j].timestamp > t + 1:
                        obs[i] = Observation(light, t, sc, U)
                        moved = Observation(light, t + 1, sc, o.payload)
                        k = i + 1
                        while k < len(obs) and _order_key(obs[k]) <= _order_key(moved):
                            k += 1
                        obs.insert(k, moved)
                        ledger.append(Fault(FORBIDDEN_TRANSITION, light, t))
                prev_state = obs[i].payload
            i += 1

    # amber runs stretched beyond the 6 s limit, kept inside one cycle
    if model.p_long_amber > 0:
        n_long = model.long_amber_s
        i = 0
        while i < len(obs):
            o = obs[i]
            if o.kind is sc and o.payload is A and rng.random() < model.p_long_amber:
                j = next_index(i, sc)
                c_next = next_index(i, cs)
                c_prev = prev_index(i, cs)
                t = o.timestamp
                if j is not None:
                    t_end = t + n_long
                    k = next_index(j, sc)
                    fits_fwd = ((c_next is None or obs[c_next].timestamp >= t_end)
                                and (k is None or obs[k].timestamp > t_end))
                    t_begin = obs[j].timestamp - n_long
                    p = prev_index(i, sc)
                    fits_back = ((c_prev is not None and obs[c_prev].timestamp <= t_begin)
                                 and (c_next is None or obs[c_next].timestamp >= obs[j].timestamp)
                                 and (p is None or obs[p].timestamp < t_begin))
                    if fits_fwd:
                        moved = replace(obs[j], timestamp=t_end)
                        del obs[j]
                        k = j
                        while k < len(obs) and _order_key(obs[k]) <= _order_key(moved):
                            k += 1
                        obs.insert(k, moved)
                        ledger.append(Fault(LONG_AMBER, light, t))
                    elif fits_back:
                        moved = replace(o, timestamp=t_begin)
                        del obs[i]
                        k = i
                        while k > 0 and _order_key(obs[k - 1]) > _order_key(moved):
                            k -= 1
                        obs.insert(k, moved)
                        ledger.append(Fault(LONG_AMBER, light, t_begin))
                        i = k
            i += 1

    if model.p_drop_cyclestart > 0 or model.p_drop_state > 0:
        kept = []
        for o in obs:
            if o.kind is cs and model.p_drop_cyclestart > 0 and rng.random() < model.p_drop_cyclestart:
                ledger.append(Fault(DROP_CYCLE_START, light, o.timestamp))
                continue
            if o.kind is sc and model.p_drop_state > 0 and rng.random() < model.p_drop_state:
                ledger.append(Fault(DROP_STATE, light, o.timestamp))
                continue
            kept.append(o)
        obs = kept
    return obs


def inject_errors(stream: Iterable[Observation], model: ErrorModel) -> tuple[list[Observation], list[Fault]]:
    """Apply random faults per light; returns the faulty stream and the fault ledger.

    Each light draws from its own generator seeded by ``(model.seed, light_id)``
    so results do not depend on how lights are interleaved.
    """
    if not any((model.p_drop_state, model.p_drop_cyclestart, model.p_long_amber, model.p_forbidden_transition)):
        return list(stream), []
    per_light: dict[str, list[Observation]] = {}
    for o in stream:
        per_light.setdefault(o.light_id, []).append(o)
    ledger: list[Fault] = []
    out = []
    for light, obs in per_light.items():
        rng = random.Random(f"faults:{model.seed}:{light}")
        out.append(_inject_light(obs, model, rng, ledger))
    ledger.sort(key=lambda f: (f.light_id, f.time, f.fault))
    return list(heapq.merge(*out, key=_order_key)), ledger


def faults_by_cycle(ledger: Iterable[Fault], cycles: Sequence[Cycle]) -> tuple[dict[tuple[str, int], set[str]], list[Fault]]:
    """Map each fault onto the reconstructed cycle containing its time.

    Returns ``{(light_id, cycle_start): {fault names}}`` and the faults that
    fall in no reconstructed cycle.
    """
    by_light: dict[str, list[Cycle]] = {}
    for c in cycles:
        by_light.setdefault(c.light_id, []).append(c)
    starts = {k: [c.start for c in v] for k, v in by_light.items()}
    hit: dict[tuple[str, int], set[str]] = {}
    orphans = []
    for f in ledger:
        cs = by_light.get(f.light_id, [])
        i = bisect.bisect_right(starts.get(f.light_id, []), f.time) - 1
        if i >= 0 and cs[i].start <= f.time < cs[i].end:
            hit.setdefault((f.light_id, cs[i].start), set()).add(f.fault)
        else:
            orphans.append(f)
    return hit, orphans
