"""End-to-end analysis: records -> cycles -> pruning -> buckets -> metrics -> store.

Parsing, reordering and reconstruction run in one sequential pass; the
per-light remainder (validation, bucketing, metrics, store writing) is
farmed out to a process pool. Workers inherit the reconstructed cycles by
fork and only exchange light ids and small summaries, and each light's
output depends on nothing but its own cycles, so results are identical for
any worker count.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

from .bucket import SlotMapper, bucketize, flatten
from .ingest import DEFAULT_REORDER_WINDOW_S, IngestStats, Partitioner, read_files
from .metrics import bucket_metrics
from .model import WEEK_SLOTS, Cycle, Observation, ObsKind
from .reconstruct import DEFAULT_MAX_CYCLE_S, Reconstructor, ReconstructStats
from .store import LightRecord, write_light, write_manifest
from .validate import DEFAULT_MAX_REMOVED, DEFAULT_NEIGHBOR_WINDOW, ErrorKind, is_excluded, prune, validation_report

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnalyzeConfig:
    timezone: str = "UTC"
    max_removed: float = DEFAULT_MAX_REMOVED
    neighbor_window: int = DEFAULT_NEIGHBOR_WINDOW
    reorder_window_s: int = DEFAULT_REORDER_WINDOW_S
    max_cycle_s: int = DEFAULT_MAX_CYCLE_S

    def to_dict(self) -> dict:
        return {
            "timezone": self.timezone,
            "max_removed": self.max_removed,
            "neighbor_window": self.neighbor_window,
            "reorder_window_s": self.reorder_window_s,
            "max_cycle_s": self.max_cycle_s,
        }


@dataclass
class LightInput:
    light_id: str
    cycles: list[Cycle] = field(default_factory=list)
    stats: ReconstructStats = field(default_factory=ReconstructStats)
    detector_changes: list[int] = field(default_factory=lambda: [0] * WEEK_SLOTS)


def collect(observations: Iterable[Observation], config: AnalyzeConfig,
            ingest_stats: Optional[IngestStats] = None) -> dict[str, LightInput]:
    """Reorder and reconstruct a mixed observation stream, light by light."""
    part = Partitioner(config.reorder_window_s, ingest_stats)
    mapper = SlotMapper(config.timezone)
    inputs: dict[str, LightInput] = {}
    builders: dict[str, Reconstructor] = {}
    detector = ObsKind.DETECTOR_CHANGE

    def consume(light: str, done: list[Observation]) -> None:
        rec = builders.get(light)
        if rec is None:
            li = inputs[light] = LightInput(light)
            rec = builders[light] = Reconstructor(light, config.max_cycle_s, li.stats)
        li = inputs[light]
        append = li.cycles.append
        for o in done:
            c = rec.feed(o)
            if c is not None:
                append(c)
            elif o.kind is detector:
                wd, h = mapper(o.timestamp)
                li.detector_changes[wd * 24 + h] += 1

    for obs in observations:
        done = part.push(obs)
        if done:
            consume(obs.light_id, done)
    for light, rest in part.flush():
        consume(light, rest)
    return inputs


def process_light(li: LightInput, config: AnalyzeConfig) -> LightRecord:
    """Validate, bucket and measure one light."""
    result = prune(li.cycles, config.neighbor_window)
    reconstructed = li.stats.reconstructed
    report = validation_report(li.light_id, reconstructed, result, config.max_removed)
    record = LightRecord(
        light_id=li.light_id,
        timezone=config.timezone,
        reconstruct=li.stats.to_dict(),
        validation=report,
        detector_changes=list(li.detector_changes),
    )
    if is_excluded(reconstructed, result.removed_count, config.max_removed):
        record.excluded = True
        if reconstructed == 0:
            record.exclusion_reason = "no reconstructed cycles"
        else:
            record.exclusion_reason = (f"{result.removed_count} of {reconstructed} reconstructed cycles removed "
                                       f"(more than {config.max_removed:.0%})")
        return record
    table = bucketize(result.kept, SlotMapper(config.timezone), li.light_id)
    record.buckets = flatten(table)
    record.metrics = [bucket_metrics(b) for b in record.buckets]
    return record


def light_summary(record: LightRecord) -> dict:
    v = record.validation
    return {
        "light_id": record.light_id,
        "reconstruct": record.reconstruct,
        "removed": v.get("removed", 0),
        "errors": v.get("errors", {}),
        "discontinuities": v.get("discontinuities", 0),
        "excluded": record.excluded,
        "kept": sum(len(b.cycles) for b in record.buckets),
        "detector_changes": sum(record.detector_changes),
    }


# inherited by forked workers; never pickled
_WORK: dict = {}


def _work(light: str) -> dict:
    li = _WORK["inputs"][light]
    record = process_light(li, _WORK["config"])
    write_light(_WORK["store"], record)
    return light_summary(record)


def _run_lights(inputs: dict[str, LightInput], store: Path, config: AnalyzeConfig, jobs: int) -> list[dict]:
    lights = sorted(inputs)
    _WORK.update(inputs=inputs, config=config, store=store)
    try:
        if jobs <= 1 or len(lights) <= 1 or "fork" not in mp.get_all_start_methods():
            return [_work(light) for light in lights]
        ctx = mp.get_context("fork")
        chunk = max(1, len(lights) // (jobs * 4))
        with ctx.Pool(jobs) as pool:
            return list(pool.imap(_work, lights, chunksize=chunk))
    finally:
        _WORK.clear()


def summarize(ingest: IngestStats, summaries: Sequence[dict], observations: Optional[int] = None) -> dict:
    """Run summary with the bookkeeping counts of the whole recording."""
    rec = ReconstructStats()
    errors: Counter = Counter({k.value: 0 for k in ErrorKind})
    removed = discontinuities = kept = detector = 0
    excluded = []
    for s in summaries:
        rec.merge(ReconstructStats(**{k: v for k, v in s["reconstruct"].items() if k != "skipped"}))
        errors.update(s["errors"])
        removed += s["removed"]
        discontinuities += s["discontinuities"]
        kept += s["kept"]
        detector += s["detector_changes"]
        if s["excluded"]:
            excluded.append(s["light_id"])
    return {
        "lines": ingest.lines,
        "observations": ingest.observations if observations is None else observations,
        "malformed_lines": ingest.malformed,
        "late_dropped": ingest.late_dropped,
        "lights": len(summaries),
        "state_changes": rec.state_changes,
        "detector_changes": rec.detector_changes,
        "program_changes": rec.program_changes,
        "cycles_started": rec.cycle_starts,
        "reconstructed": rec.reconstructed,
        "non_reconstructible": rec.skipped,
        "non_reconstructible_no_state": rec.skipped_no_state,
        "non_reconstructible_too_long": rec.skipped_too_long,
        "removed": removed,
        "removed_by_rule": dict(sorted(errors.items())),
        "discontinuities": discontinuities,
        "kept": kept,
        "excluded_lights": len(excluded),
        "excluded_light_ids": sorted(excluded),
    }


def analyze_observations(observations: Iterable[Observation], store: Union[str, Path],
                         config: AnalyzeConfig = AnalyzeConfig(), jobs: int = 1,
                         ingest_stats: Optional[IngestStats] = None, inputs: Sequence[str] = ()) -> dict:
    store = Path(store)
    ingest_stats = ingest_stats if ingest_stats is not None else IngestStats()
    consumed = 0

    def counted(stream: Iterable[Observation]) -> Iterator[Observation]:
        nonlocal consumed
        for obs in stream:
            consumed += 1
            yield obs

    lights = collect(counted(observations), config, ingest_stats)
    store.mkdir(parents=True, exist_ok=True)
    lights_dir = store / "lights"
    if lights_dir.is_dir():
        for stale in lights_dir.glob("*.json"):
            stale.unlink()
    summaries = _run_lights(lights, store, config, jobs)
    summary = summarize(ingest_stats, summaries, consumed)
    write_manifest(store, {"config": config.to_dict(), "inputs": [os.path.basename(p) for p in inputs],
                           "summary": summary})
    for msg in ingest_stats.diagnostics:
        log.warning(msg)
    return summary


def analyze(paths: Sequence[Union[str, Path]], store: Union[str, Path],
            config: AnalyzeConfig = AnalyzeConfig(), jobs: int = 1) -> dict:
    """Analyze record files into a bucket store; returns the run summary."""
    stats = IngestStats()
    return analyze_observations(read_files(paths, stats), store, config, jobs, stats,
                                inputs=[str(p) for p in paths])
