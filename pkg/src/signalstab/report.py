"""Plot-ready exports computed from a bucket store.

Files written by :func:`write_reports`:

``timeline.csv``
    One row per weekday-hour slot with quartiles of the per-light bucket
    metrics and totals of green phases, detector changes and cycles.
``green_vs_cd.csv`` / ``green_vs_cd.json``
    Bucket counts per (median green length, median cycle discrepancy) cell,
    plus the green-overlap share in the JSON file.
``lights.csv`` / ``lights.json``
    Per-light medians over the light's non-empty buckets and the most common
    predictability class; excluded lights are listed separately in the JSON.
``samples/index.csv`` and ``samples/<id>.csv``
    Randomly drawn buckets, one row of per-second state codes per cycle.
"""

from __future__ import annotations

import csv
import json
import random
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .classify import PredictabilityClass, Thresholds, classify
from .metrics import lower_median
from .model import WEEK_SLOTS, WEEKDAY_NAMES, BucketMetrics, Cycle
from .store import LightRecord, dumps, iter_store


def _active(records: Iterable[LightRecord]) -> list[LightRecord]:
    return [r for r in records if not r.excluded]


def _quartiles(values: Sequence[float]) -> tuple[Optional[float], Optional[float], Optional[float]]:
    if not values:
        return None, None, None
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return float(q1), float(med), float(q3)


TIMELINE_FIELDS = (
    "weekday", "day", "hour", "buckets", "cycles",
    "cd_n", "cd_q1", "cd_median", "cd_q3",
    "wtd_n", "wtd_q1", "wtd_median", "wtd_q3",
    "green_n", "green_q1", "green_median", "green_q3",
    "green_phases", "detector_changes",
)


def weekly_timeline(records: Iterable[LightRecord]) -> list[dict]:
    """Distribution of bucket metrics across lights for each of the 168 week slots."""
    records = _active(records)
    rows = []
    for slot in range(WEEK_SLOTS):
        cds, wtds, greens = [], [], []
        buckets = cycles = phases = detectors = 0
        for r in records:
            detectors += r.detector_changes[slot]
            if not r.metrics:
                continue
            m = r.metrics[slot]
            if m.cycle_count == 0:
                continue
            buckets += 1
            cycles += m.cycle_count
            phases += m.green_phase_count
            if m.median_cycle_discrepancy_s is not None:
                cds.append(m.median_cycle_discrepancy_s)
            if m.wait_time_diversity is not None:
                wtds.append(float(m.wait_time_diversity))
            if m.median_green_length_s is not None:
                greens.append(m.median_green_length_s)
        row = {"weekday": slot // 24, "day": WEEKDAY_NAMES[slot // 24], "hour": slot % 24,
               "buckets": buckets, "cycles": cycles}
        for name, vals in (("cd", cds), ("wtd", wtds), ("green", greens)):
            q1, med, q3 = _quartiles(vals)
            row.update({f"{name}_n": len(vals), f"{name}_q1": q1, f"{name}_median": med, f"{name}_q3": q3})
        row["green_phases"] = phases
        row["detector_changes"] = detectors
        rows.append(row)
    return rows


@dataclass
class GreenVsDiscrepancy:
    cells: dict[tuple[int, int], int]
    overlap: int
    green_buckets: int

    @property
    def overlap_fraction(self) -> Optional[Fraction]:
        if not self.green_buckets:
            return None
        return Fraction(self.overlap, self.green_buckets)

    def rows(self) -> list[dict]:
        return [{"median_green_length_s": g, "median_cycle_discrepancy_s": cd, "buckets": n}
                for (g, cd), n in sorted(self.cells.items())]

    def to_dict(self) -> dict:
        frac = self.overlap_fraction
        return {
            "overlap_buckets": self.overlap,
            "green_buckets": self.green_buckets,
            "overlap_fraction": None if frac is None else float(frac),
            "cells": self.rows(),
        }


def green_vs_discrepancy_matrix(records: Iterable[LightRecord]) -> GreenVsDiscrepancy:
    """2-D histogram of (median green length, median discrepancy) over buckets.

    The overlap share counts buckets with at least one green phase whose
    median discrepancy is below the median green length; buckets without a
    discrepancy value (fewer than two cycles) are left out of both counts.
    """
    cells: Counter = Counter()
    overlap = green_buckets = 0
    for r in _active(records):
        for m in r.metrics:
            cd, g = m.median_cycle_discrepancy_s, m.median_green_length_s
            if cd is None or g is None:
                continue
            cells[(g, cd)] += 1
            if m.green_phase_count >= 1:
                green_buckets += 1
                if cd < g:
                    overlap += 1
    return GreenVsDiscrepancy(dict(cells), overlap, green_buckets)


def predominant_class(metrics: Iterable[BucketMetrics], thresholds: Thresholds = Thresholds()) -> PredictabilityClass:
    """Most frequent determinate class; ties go to the more predictable class."""
    counts = Counter(classify(m, thresholds) for m in metrics if m.cycle_count)
    counts.pop(PredictabilityClass.INDETERMINATE, None)
    if not counts:
        return PredictabilityClass.INDETERMINATE
    order = list(PredictabilityClass)
    return max(counts, key=lambda c: (counts[c], -order.index(c)))


def _median_of(values: list):
    return lower_median(values) if values else None


def per_light_medians(records: Iterable[LightRecord], thresholds: Thresholds = Thresholds()) -> tuple[list[dict], list[dict]]:
    """Per-light medians over the light's non-empty buckets, and the excluded lights."""
    rows, excluded = [], []
    for r in records:
        if r.excluded:
            excluded.append({"light_id": r.light_id, "reason": r.exclusion_reason})
            continue
        ms = [m for m in r.metrics if m.cycle_count]
        cd = _median_of([m.median_cycle_discrepancy_s for m in ms if m.median_cycle_discrepancy_s is not None])
        wtd = _median_of([m.wait_time_diversity for m in ms if m.wait_time_diversity is not None])
        green = _median_of([m.median_green_length_s for m in ms if m.median_green_length_s is not None])
        rows.append({
            "light_id": r.light_id,
            "buckets": len(ms),
            "median_cycle_discrepancy_s": cd,
            "wait_time_diversity": wtd,
            "median_green_length_s": green,
            "predominant_class": predominant_class(ms, thresholds),
        })
    return rows, excluded


@dataclass
class BucketSample:
    light_id: str
    weekday: int
    hour: int
    metrics: BucketMetrics
    cycles: tuple[Cycle, ...]

    @property
    def sample_id(self) -> str:
        safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in self.light_id)
        return f"{safe}_{WEEKDAY_NAMES[self.weekday]}_{self.hour:02d}"

    @property
    def title(self) -> str:
        """``(cycle discrepancy, wait time diversity)`` caption."""
        cd = self.metrics.median_cycle_discrepancy_s
        wtd = self.metrics.wait_time_diversity
        cd_txt = "-" if cd is None else f"{cd}s"
        wtd_txt = "-" if wtd is None else f"{float(wtd) * 100:.0f}%"
        return f"({cd_txt}, {wtd_txt})"

    def rows(self) -> list[list[str]]:
        return [[str(c.start)] + list(c.states.decode("ascii")) for c in self.cycles]


def sample_buckets(records: Iterable[LightRecord], count: int, seed: int = 0) -> list[BucketSample]:
    """Uniform sample of non-empty buckets, in store order."""
    candidates = []
    for r in _active(records):
        for b, m in zip(r.buckets, r.metrics):
            if b.cycles:
                candidates.append(BucketSample(r.light_id, b.weekday, b.hour, m, b.cycles))
    if count >= len(candidates):
        return candidates
    picked = sorted(random.Random(seed).sample(range(len(candidates)), count))
    return [candidates[i] for i in picked]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Fraction):
        return repr(float(v))
    if isinstance(v, PredictabilityClass):
        return v.value
    return str(v)


def _write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([_cell(row.get(f)) for f in fieldnames])


def _json_value(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, PredictabilityClass):
        return v.value
    return v


def load_metadata(path: Union[str, Path]) -> dict[str, dict]:
    """Optional per-light metadata CSV keyed by a ``light_id`` column."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "light_id" not in reader.fieldnames:
            raise ValueError(f"{path}: metadata needs a light_id column")
        return {row["light_id"]: {k: v for k, v in row.items() if k != "light_id"} for row in reader}


LIGHT_FIELDS = ("light_id", "buckets", "median_cycle_discrepancy_s", "wait_time_diversity",
                "median_green_length_s", "predominant_class")


def write_reports(store: Union[str, Path], out: Union[str, Path], thresholds: Thresholds = Thresholds(),
                  samples: int = 0, seed: int = 0, metadata: Optional[dict[str, dict]] = None) -> dict:
    """Write every export for a store into ``out``; returns a small summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    records = list(iter_store(store))

    timeline = weekly_timeline(records)
    _write_csv(out / "timeline.csv", TIMELINE_FIELDS, timeline)

    gvd = green_vs_discrepancy_matrix(records)
    _write_csv(out / "green_vs_cd.csv", ("median_green_length_s", "median_cycle_discrepancy_s", "buckets"), gvd.rows())
    (out / "green_vs_cd.json").write_text(dumps(gvd.to_dict()), encoding="utf-8")

    rows, excluded = per_light_medians(records, thresholds)
    fields = list(LIGHT_FIELDS)
    if metadata:
        extra = sorted({k for meta in metadata.values() for k in meta})
        fields += extra
        for row in rows:
            row.update(metadata.get(row["light_id"], {}))
    _write_csv(out / "lights.csv", fields, rows)
    (out / "lights.json").write_text(dumps({
        "lights": [{k: _json_value(v) for k, v in row.items()} for row in rows],
        "excluded": excluded,
    }), encoding="utf-8")

    drawn = sample_buckets(records, samples, seed) if samples > 0 else []
    if drawn:
        sdir = out / "samples"
        sdir.mkdir(exist_ok=True)
        index = []
        for s in drawn:
            width = max(c.length_s for c in s.cycles)
            with open(sdir / f"{s.sample_id}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["cycle_start"] + [f"s{i}" for i in range(width)])
                w.writerows(s.rows())
            index.append({"sample_id": s.sample_id, "light_id": s.light_id, "weekday": s.weekday,
                          "hour": s.hour, "title": s.title, "cycles": len(s.cycles)})
        _write_csv(sdir / "index.csv", ("sample_id", "light_id", "weekday", "hour", "title", "cycles"), index)

    frac = gvd.overlap_fraction
    return {
        "lights": len(rows),
        "excluded_lights": len(excluded),
        "green_overlap_fraction": None if frac is None else float(frac),
        "samples": len(drawn),
    }


CLASS_FIELDS = ("light_id", "weekday", "hour", "cycle_count", "median_cycle_discrepancy_s",
                "wait_time_diversity", "median_green_length_s", "green_phase_count", "wait_time_count", "class")


def classify_store(store: Union[str, Path], out: Union[str, Path], thresholds: Thresholds = Thresholds()) -> dict:
    """Classify every non-empty bucket; writes ``classes.csv`` and returns class shares."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    counts: Counter = Counter({c.value: 0 for c in PredictabilityClass})
    cd_n = cd_high = wtd_n = wtd_high = both_n = both_high = 0
    wtd_cut = thresholds.wtd_exact
    for r in iter_store(store):
        if r.excluded:
            continue
        for b, m in zip(r.buckets, r.metrics):
            if not m.cycle_count:
                continue
            cls = classify(m, thresholds)
            counts[cls.value] += 1
            row = {"light_id": r.light_id, "weekday": b.weekday, "hour": b.hour, "class": cls}
            row.update(m.to_dict())
            row["wait_time_diversity"] = m.wait_time_diversity
            rows.append(row)
            cd, wtd = m.median_cycle_discrepancy_s, m.wait_time_diversity
            if cd is not None:
                cd_n += 1
                cd_high += cd > thresholds.cd_s
            if wtd is not None:
                wtd_n += 1
                wtd_high += wtd > wtd_cut
            if cd is not None and wtd is not None:
                both_n += 1
                both_high += cd > thresholds.cd_s and wtd > wtd_cut
    _write_csv(out / "classes.csv", CLASS_FIELDS, rows)

    def share(a: int, n: int) -> Optional[float]:
        return a / n if n else None

    summary = {
        "thresholds": {"cd_s": thresholds.cd_s, "wtd": float(thresholds.wtd)},
        "buckets": len(rows),
        "classes": dict(counts),
        "cd_high_share": share(cd_high, cd_n),
        "wtd_high_share": share(wtd_high, wtd_n),
        "both_high_share": share(both_high, both_n),
    }
    (out / "classes.json").write_text(dumps(summary), encoding="utf-8")
    return summary
