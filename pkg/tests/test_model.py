from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import CODES
from signalstab.model import (BucketMetrics, Cycle, Observation, ObsKind, SignalState, decode_states,
                              encode_states, rle_decode, rle_encode)


def test_state_codes_are_distinct_and_roundtrip():
    codes = {s.code for s in SignalState}
    assert codes == set(CODES)
    for s in SignalState:
        assert SignalState.from_code(s.code) is s


@pytest.mark.parametrize("text", ["red-amber", "Red_Amber", "redamber", " RED_AMBER "])
def test_red_amber_spellings(text):
    assert SignalState.parse(text) is SignalState.RED_AMBER


def test_empty_cycle_rejected():
    with pytest.raises(ValueError):
        Cycle("tl", 0, b"")


def test_cycle_geometry():
    c = Cycle.from_states("tl", 100, [SignalState.GREEN] * 3 + [SignalState.RED] * 2)
    assert c.states == b"GGGRR"
    assert c.length_s == 5
    assert c.end == 105
    assert c.signal_states[-1] is SignalState.RED


def test_rle_examples():
    assert rle_encode(b"GGGRR") == "G3R2"
    assert rle_decode("G30A3R27") == b"G" * 30 + b"A" * 3 + b"R" * 27


@pytest.mark.parametrize("bad", ["G3X2", "G0", "3G", "G3 R2"])
def test_rle_rejects_garbage(bad):
    with pytest.raises(ValueError):
        rle_decode(bad)


@given(st.text(alphabet=CODES, min_size=1, max_size=200))
def test_rle_roundtrip(states):
    raw = states.encode()
    assert rle_decode(rle_encode(raw)) == raw


@given(st.lists(st.sampled_from(list(SignalState)), min_size=1, max_size=50))
def test_state_encoding_roundtrip(states):
    assert decode_states(encode_states(states)) == tuple(states)


@given(st.text(alphabet=CODES, min_size=1, max_size=60), st.integers(0, 2**40),
       st.one_of(st.none(), st.text(min_size=1, max_size=8)))
def test_cycle_dict_roundtrip(states, start, program):
    c = Cycle("tl_1", start, states.encode(), program)
    assert Cycle.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("obs", [
    Observation.state_change("a", 1, SignalState.AMBER),
    Observation.cycle_start("a", 2),
    Observation.program_change("a", 3, "P7"),
    Observation.detector_change("a", 4, True),
])
def test_observation_dict_roundtrip(obs):
    assert Observation.from_dict(obs.to_dict()) == obs


@given(st.one_of(st.none(), st.integers(0, 500)),
       st.one_of(st.none(), st.fractions(min_value=0, max_value=1)),
       st.one_of(st.none(), st.integers(0, 500)),
       st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_metrics_dict_roundtrip(cd, wtd, green, n, phases, waits):
    m = BucketMetrics(cd, wtd, green, n, phases, waits)
    assert BucketMetrics.from_dict(m.to_dict()) == m


def test_metrics_fraction_serialized_exactly():
    assert BucketMetrics(wait_time_diversity=Fraction(1, 3)).to_dict()["wait_time_diversity"] == "1/3"


def test_observation_kinds_are_wire_letters():
    assert [k.value for k in ObsKind] == ["S", "C", "P", "D"]
