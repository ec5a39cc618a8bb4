"""Shared builders and hypothesis strategies."""

from hypothesis import strategies as st

from signalstab.model import Cycle, Observation, SignalState

CODES = "GRAUD"
T0 = 1695427200  # Sat 2023-09-23 00:00:00 UTC


def cyc(start, states, light="tl"):
    return Cycle(light, start, states.encode() if isinstance(states, str) else states)


def chain(*state_strings, start=T0, light="tl"):
    """Exactly adjacent cycles built from state strings."""
    out = []
    t = start
    for s in state_strings:
        out.append(cyc(t, s, light))
        t += len(s)
    return out


def sc(ts, code, light="tl"):
    return Observation.state_change(light, ts, SignalState.from_code(code))


def cs(ts, light="tl"):
    return Observation.cycle_start(light, ts)


state_strings = st.text(alphabet=CODES, min_size=1, max_size=12)
small_state_strings = st.text(alphabet="GRA", min_size=1, max_size=12)


@st.composite
def buckets(draw, max_cycles=8, max_len=12, alphabet=CODES):
    """Chronological ``[(start, states)]`` with a mix of adjacent and gapped cycles."""
    n = draw(st.integers(0, max_cycles))
    t = T0
    out = []
    for _ in range(n):
        s = draw(st.text(alphabet=alphabet, min_size=1, max_size=max_len))
        out.append((t, s))
        t += len(s) + draw(st.sampled_from([0, 0, 0, 1, 5]))
    return out


def run_pipeline(stream, config=None):
    """In-memory analyze: ``{light_id: LightRecord}`` without touching disk."""
    from signalstab.pipeline import AnalyzeConfig, collect, process_light

    config = config or AnalyzeConfig()
    return {light: process_light(li, config) for light, li in sorted(collect(stream, config).items())}


def all_cycles(stream, max_cycle_s=600):
    """Reconstructed (unpruned) cycles of every light in a stream."""
    from signalstab.pipeline import AnalyzeConfig, collect

    lights = collect(stream, AnalyzeConfig(max_cycle_s=max_cycle_s))
    return {light: li.cycles for light, li in sorted(lights.items())}
