"""Naive reference implementations used as test oracles.

Everything here is deliberately slow and literal: per-second loops, full
enumeration, no numpy, no regexes, nothing shared with the package.
"""

from fractions import Fraction
from itertools import combinations

GREEN = "G"


def discrepancy(a, b):
    """Per-second comparison of two start-aligned state strings."""
    total = 0
    for i in range(max(len(a), len(b))):
        if i >= len(a) or i >= len(b):
            total += 1
        elif a[i] != b[i]:
            total += 1
    return total


def lower_median(values):
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


def median_discrepancy(cycles):
    if len(cycles) < 2:
        return None
    return lower_median([discrepancy(a, b) for a, b in combinations(cycles, 2)])


def green_seconds(states):
    return sum(1 for s in states if s == GREEN)


def median_green(cycles):
    if not cycles:
        return None
    return lower_median([green_seconds(c) for c in cycles])


def sequences(starts_and_states):
    """Split ``[(start, states)]`` into runs where each start equals the previous end."""
    runs = []
    for start, states in starts_and_states:
        if runs and runs[-1][-1][0] + len(runs[-1][-1][1]) == start:
            runs[-1].append((start, states))
        else:
            runs.append([(start, states)])
    return runs


def wait_times(timeline):
    """Count non-green seconds between consecutive green phases, second by second."""
    waits = []
    seen_green = False
    counting = 0
    prev = None
    for s in timeline:
        if s == GREEN:
            if prev is not None and prev != GREEN and seen_green:
                waits.append(counting)
            seen_green = True
            counting = 0
        else:
            counting += 1
        prev = s
    return waits


def green_phases(timeline):
    count = 0
    prev = None
    for s in timeline:
        if s == GREEN and prev != GREEN:
            count += 1
        prev = s
    return count


def bucket(starts_and_states):
    """All bucket metrics for ``[(start, states)]`` in chronological order."""
    cycles = [s for _, s in starts_and_states]
    waits = []
    phases = 0
    for run in sequences(starts_and_states):
        timeline = "".join(s for _, s in run)
        waits += wait_times(timeline)
        phases += green_phases(timeline)
    wtd = Fraction(len(set(waits)), len(waits)) if waits else None
    return {
        "median_cycle_discrepancy_s": median_discrepancy(cycles),
        "wait_time_diversity": wtd,
        "median_green_length_s": median_green(cycles),
        "cycle_count": len(cycles),
        "green_phase_count": phases,
        "wait_time_count": len(waits),
    }


# --------------------------------------------------------------- reconstruction

def replay_cycles(events, max_cycle_s=600):
    """Second-by-second replay of one light's events.

    ``events`` holds ``(ts, kind, code)`` tuples with kind "S" or "C". The
    state shown during second ``t`` is the code of the latest state change
    at or before ``t``. Returns ``(cycles, skipped)`` where cycles are
    ``(start, states)`` pairs.
    """
    changes = sorted((ts, i, code) for i, (ts, kind, code) in enumerate(events) if kind == "S")
    starts = sorted({ts for ts, kind, _ in events if kind == "C"})

    def state_at(t):
        current = None
        for ts, _, code in changes:
            if ts <= t:
                current = code
        return current

    cycles = []
    skipped = 0
    for t0, t1 in zip(starts, starts[1:]):
        if state_at(t0) is None or t1 - t0 > max_cycle_s:
            skipped += 1
            continue
        cycles.append((t0, "".join(state_at(t) for t in range(t0, t1))))
    return cycles, skipped


# --------------------------------------------------------------------- pruning

FORBIDDEN = {("R", "A"), ("A", "G"), ("A", "U"), ("G", "U"), ("U", "R"), ("U", "A")}


def longest_run(states, code):
    best = cur = 0
    for s in states:
        cur = cur + 1 if s == code else 0
        best = max(best, cur)
    return best


def violates(states, neighbor_lengths):
    if longest_run(states, "A") > 6 or longest_run(states, "U") > 2:
        return True
    if any((states[i], states[i + 1]) in FORBIDDEN for i in range(len(states) - 1)):
        return True
    if neighbor_lengths:
        m = lower_median(neighbor_lengths)
        if len(states) > Fraction(3, 2) * m or len(states) < Fraction(1, 2) * m:
            return True
    return False


def prune_flags(cycles, window=2):
    """Removal flag per ``(start, states)`` cycle, neighbors taken from the unpruned list."""
    flags = []
    for i, (_, states) in enumerate(cycles):
        lo = max(0, i - window)
        neigh = [len(s) for _, s in cycles[lo:i]] + [len(s) for _, s in cycles[i + 1:i + 1 + window]]
        flags.append(violates(states, neigh))
    return flags
