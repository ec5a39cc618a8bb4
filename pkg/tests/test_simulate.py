import json
import re
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import T0, all_cycles, run_pipeline
from signalstab.ingest import serialize_records
from signalstab.metrics import cycle_discrepancy, pooled_wait_times
from signalstab.model import ObsKind
from signalstab.simulate import (ErrorModel, Level, ProgramSpec, SpecError, cycle_layout, demand_fraction,
                                 faults_by_cycle, inject_errors, level2_adjustment, load_spec_file, simulate,
                                 simulate_fleet)
from signalstab.validate import prune

HOUR = 3600


def fixed(**kw):
    return ProgramSpec(**{"light_id": "fx", "level": Level.FIXED_TIME, "green_offset_s": 10,
                          "green_length_s": 25, **kw})


def partial(**kw):
    return ProgramSpec(**{"light_id": "pa", "level": Level.PARTIALLY_ADAPTIVE, "green_offset_s": 12,
                          "green_length_s": 20, "extension_range_s": (0, 10), "demand_rate": 300, **kw})


def adaptive(**kw):
    return ProgramSpec(**{"light_id": "fa", "level": Level.FULLY_ADAPTIVE, "demand_rate": 60, **kw})


def runs(timeline):
    return [(m.group(0)[0], len(m.group(0))) for m in re.finditer(rb"(.)\1*", timeline)]


def test_layout_of_fixed_program():
    assert cycle_layout(fixed()) == b"R" * 9 + b"U" + b"G" * 25 + b"AAA" + b"R" * 22
    assert cycle_layout(fixed(uses_amber=False)) == b"R" * 10 + b"G" * 25 + b"R" * 25


def test_fixed_two_hours_gives_120_identical_cycles():
    cycles = all_cycles(simulate(fixed(), T0, 2 * HOUR))["fx"]
    assert len(cycles) == 120
    assert {c.states for c in cycles} == {cycle_layout(fixed())}
    record = run_pipeline(simulate(fixed(), T0, 2 * HOUR))["fx"]
    assert record.validation["removed"] == 0
    assert {m.median_cycle_discrepancy_s for m in record.metrics if m.cycle_count} == {0}


def test_fixed_program_starts_are_every_cycle_length():
    starts = [o.timestamp for o in simulate(fixed(), T0, HOUR) if o.kind is ObsKind.CYCLE_START]
    assert starts == list(range(T0, T0 + HOUR + 1, 60))


def test_level2_bounds():
    spec = partial()
    base = cycle_layout(spec)
    cycles = all_cycles(simulate(spec, T0, 6 * HOUR))["pa"]
    assert {c.length_s for c in cycles} == {60}
    lo, hi = spec.extension_range_s
    assert max(cycle_discrepancy(c.states, base) for c in cycles) <= (hi - lo) + spec.amber_s + spec.red_amber_s
    assert len({c.states.count(b"G") for c in cycles}) > 1  # demand does move the window
    record = run_pipeline(simulate(spec, T0, 6 * HOUR))["pa"]
    for b in record.buckets:
        if b.cycles:
            assert len(set(pooled_wait_times(b))) <= hi - lo + 1


def test_level2_shift_moves_green_start_within_bounds():
    spec = partial(shift_s=3, extension_range_s=(0, 4), green_offset_s=14)
    cycles = all_cycles(simulate(spec, T0, 6 * HOUR))["pa"]
    starts = Counter(c.states.index(b"G") for c in cycles)
    assert set(starts) <= set(range(14 - 3, 14 + 4))
    assert len(starts) > 1


def test_level2_adjustment_monotone_in_demand():
    spec = partial(shift_s=2)
    results = [level2_adjustment(spec, n, 5.0) for n in range(0, 40)]
    exts = [e for _, e in results]
    shifts = [s for s, _ in results]
    assert exts == sorted(exts) and exts[0] == 0 and exts[-1] <= 10
    assert shifts == sorted(shifts, reverse=True)
    assert all(-2 <= s <= 2 for s in shifts)
    assert demand_fraction(5, 5.0) == 0.5


def test_level3_zero_demand_is_one_green_run():
    spec = adaptive(demand_rate=0)
    stream = list(simulate(spec, T0, 2 * HOUR))
    changes = [o for o in stream if o.kind is ObsKind.STATE_CHANGE]
    assert [o.payload.code for o in changes] == ["G"]
    record = run_pipeline(stream)["fa"]
    active = [m for m in record.metrics if m.cycle_count]
    assert active and all(m.wait_time_diversity is None and m.median_cycle_discrepancy_s == 0 for m in active)


def test_level3_respects_min_and_max_green():
    spec = adaptive(demand_rate=120, min_green_s=5, max_green_s=30)
    cycles = all_cycles(simulate(spec, T0, 12 * HOUR))["fa"]
    timeline = b"".join(c.states for c in cycles)
    rs = runs(timeline)
    for code, n in rs[1:-1]:
        if code == ord("G"):
            assert n >= spec.min_green_s
        elif code == ord("R"):
            assert n <= spec.max_green_s
        elif code == ord("A"):
            assert n == spec.amber_s
        elif code == ord("U"):
            assert n == spec.red_amber_s
    assert prune(cycles).removed_count == 0


def test_detector_pulses_at_arrivals():
    stream = list(simulate(adaptive(), T0, HOUR))
    det = [o for o in stream if o.kind is ObsKind.DETECTOR_CHANGE]
    on = [o.timestamp for o in det if o.payload]
    off = [o.timestamp for o in det if not o.payload]
    assert on and len(off) in (len(on), len(on) - 1)
    assert all(b == a + 1 for a, b in zip(on, off))


def test_detectors_can_be_disabled():
    stream = simulate(adaptive(detectors=False), T0, HOUR)
    assert not any(o.kind is ObsKind.DETECTOR_CHANGE for o in stream)


def test_demand_schedule_follows_hours():
    sched = [0.0] * 24
    sched[1] = 600.0
    stream = list(simulate(adaptive(demand_schedule=tuple(sched)), T0, 3 * HOUR))
    hours = Counter((o.timestamp - T0) // HOUR for o in stream if o.kind is ObsKind.DETECTOR_CHANGE and o.payload)
    assert set(hours) == {1}


def test_program_id_emitted():
    stream = list(simulate(fixed(program_id="P1"), T0, HOUR))
    assert stream[0].kind is ObsKind.PROGRAM_CHANGE
    assert {c.program_id for c in all_cycles(stream)["fx"]} == {"P1"}


@pytest.mark.parametrize("kw", [
    {"green_length_s": 60},
    {"amber_s": 7},
    {"red_amber_s": 3},
    {"min_green_s": 0},
    {"extension_range_s": (5, 0)},
    {"shift_s": 2},
    {"demand_schedule": (1.0,) * 5},
    {"demand_rate": -1},
])
def test_infeasible_specs_rejected(kw):
    with pytest.raises(SpecError):
        list(simulate(fixed(**kw), T0, HOUR))


def test_duration_shorter_than_cycle_rejected():
    with pytest.raises(SpecError):
        list(simulate(fixed(), T0, 30))


def test_spec_file_forms(tmp_path):
    one = tmp_path / "one.json"
    one.write_text(json.dumps({"light_id": "a", "level": "fixed_time"}))
    many = tmp_path / "many.json"
    many.write_text(json.dumps({"lights": [{"light_id": "a", "level": 1}, partial().to_dict()]}))
    assert [s.level for s in load_spec_file(one)] == [Level.FIXED_TIME]
    assert [s.light_id for s in load_spec_file(many)] == ["a", "pa"]
    assert ProgramSpec.from_dict(partial().to_dict()) == partial()
    dup = tmp_path / "dup.json"
    dup.write_text(json.dumps([{"light_id": "a"}, {"light_id": "a"}]))
    with pytest.raises(SpecError):
        load_spec_file(dup)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"light_id": "a", "colour": "blue"}))
    with pytest.raises(SpecError):
        load_spec_file(bad)


def test_same_seed_same_bytes_different_seed_differs():
    def blob(seed):
        return serialize_records(simulate_fleet([partial(seed=seed), adaptive(seed=seed)], T0, 3 * HOUR))
    assert blob(1) == blob(1)
    assert blob(1) != blob(2)


def test_fleet_is_time_ordered():
    stream = list(simulate_fleet([fixed(), partial(), adaptive()], T0, HOUR))
    keys = [(o.timestamp, 0 if o.kind is ObsKind.CYCLE_START else 1) for o in stream]
    assert keys == sorted(keys)
    assert {o.light_id for o in stream} == {"fx", "pa", "fa"}


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000), st.booleans())
def test_clean_streams_are_never_pruned(level, seed, amber):
    spec = {1: fixed, 2: partial, 3: adaptive}[level](seed=seed, uses_amber=amber)
    cycles = all_cycles(simulate(spec, T0, 2 * HOUR))[spec.light_id]
    assert cycles
    assert prune(cycles).removed_count == 0


# ----------------------------------------------------------------- injection

def test_zero_probabilities_are_identity():
    stream = list(simulate(partial(), T0, HOUR))
    out, ledger = inject_errors(stream, ErrorModel(seed=3))
    assert out == stream and ledger == []


def test_long_amber_everywhere_flags_every_cycle():
    stream = simulate(fixed(), T0, 2 * HOUR)
    out, ledger = inject_errors(stream, ErrorModel(p_long_amber=1.0))
    cycles = all_cycles(out)["fx"]
    result = prune(cycles)
    assert len(ledger) == len(cycles) == result.removed_count
    assert result.histogram_by_kind()["amber_too_long"] == len(cycles)


def test_forbidden_transition_injection():
    out, ledger = inject_errors(simulate(fixed(uses_amber=False), T0, HOUR), ErrorModel(p_forbidden_transition=1.0))
    cycles = all_cycles(out)["fx"]
    assert all(b"GUR" in c.states for c in cycles)
    assert len(ledger) == len(cycles) == 60
    assert prune(cycles).histogram_by_kind()["forbidden_transition"] == 2 * 60  # G->U and U->R


def test_dropped_starts_double_cycles_and_trip_length_rule():
    out, ledger = inject_errors(simulate(fixed(), T0, 6 * HOUR), ErrorModel(p_drop_cyclestart=0.5, seed=4))
    cycles = all_cycles(out)["fx"]
    lengths = Counter(c.length_s for c in cycles)
    assert lengths[120] > 0
    result = prune(cycles)
    assert result.histogram_by_kind()["length_outlier"] > 0
    # a doubled cycle among regular neighbors is always caught
    for i in range(2, len(cycles) - 2):
        around = cycles[i - 2:i] + cycles[i + 1:i + 3]
        if cycles[i].length_s >= 120 and all(c.length_s == 60 for c in around):
            assert cycles[i] not in result.kept


def test_drop_state_ledger_and_determinism():
    model = ErrorModel(p_drop_state=0.2, p_long_amber=0.3, seed=9)
    a = inject_errors(simulate(partial(), T0, HOUR), model)
    b = inject_errors(simulate(partial(), T0, HOUR), model)
    assert a == b
    assert {f.fault for f in a[1]} <= {"drop_state", "long_amber"}
    assert Counter(f.fault for f in a[1])["drop_state"] > 0


@pytest.mark.parametrize("kw", [{"p_drop_state": 1.5}, {"p_long_amber": -0.1}, {"long_amber_s": 6}])
def test_error_model_validation(kw):
    with pytest.raises(SpecError):
        ErrorModel(**kw)


def test_faults_map_onto_cycles():
    out, ledger = inject_errors(simulate(fixed(), T0, HOUR), ErrorModel(p_long_amber=1.0))
    cycles = all_cycles(out)["fx"]
    hit, orphans = faults_by_cycle(ledger, cycles)
    assert orphans == []
    assert set(hit) == {("fx", c.start) for c in cycles}
