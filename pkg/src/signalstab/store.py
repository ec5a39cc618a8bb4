"""On-disk bucket store: one JSON document per light plus a run manifest.

Layout of ``<store>/lights/<quoted light id>.json``::

    {
      "format": "signalstab-bucket-store/1",
      "light_id": "tl_0042",
      "timezone": "UTC",
      "excluded": false,
      "exclusion_reason": null,
      "reconstruct": {...counts...},
      "validation": {...per-light validation report...},
      "detector_changes": [168 ints, slot = weekday * 24 + hour],
      "buckets": [
        {"weekday": 0, "hour": 0,
         "cycles": [[start_epoch_s, "G30A3R27", program_id_or_null], ...],
         "metrics": {...BucketMetrics...}},
        ... 168 entries in slot order ...
      ]
    }

Cycle states are run-length encoded with the codes G (green), R (red),
A (amber), U (red-amber) and D (dark). Excluded lights keep their
validation record but carry empty buckets. Documents are written with
sorted keys and no whitespace so identical runs give identical bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union
from urllib.parse import quote, unquote

from .bucket import make_bucket
from .model import WEEK_SLOTS, BucketMetrics, Cycle, HourlyBucket, rle_decode, rle_encode

FORMAT = "signalstab-bucket-store/1"
MANIFEST = "manifest.json"


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n"


@dataclass
class LightRecord:
    light_id: str
    timezone: str = "UTC"
    excluded: bool = False
    exclusion_reason: Optional[str] = None
    reconstruct: dict = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    detector_changes: list[int] = field(default_factory=lambda: [0] * WEEK_SLOTS)
    buckets: list[HourlyBucket] = field(default_factory=list)
    metrics: list[BucketMetrics] = field(default_factory=list)

    def to_dict(self) -> dict:
        buckets = []
        for slot in range(WEEK_SLOTS):
            b = self.buckets[slot] if self.buckets else None
            m = self.metrics[slot] if self.metrics else BucketMetrics()
            cycles = [] if b is None else [[c.start, rle_encode(c.states), c.program_id] for c in b.cycles]
            buckets.append({"weekday": slot // 24, "hour": slot % 24, "cycles": cycles, "metrics": m.to_dict()})
        return {
            "format": FORMAT,
            "light_id": self.light_id,
            "timezone": self.timezone,
            "excluded": self.excluded,
            "exclusion_reason": self.exclusion_reason,
            "reconstruct": self.reconstruct,
            "validation": self.validation,
            "detector_changes": list(self.detector_changes),
            "buckets": buckets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LightRecord":
        if d.get("format") != FORMAT:
            raise ValueError(f"unsupported store format {d.get('format')!r}")
        light = d["light_id"]
        buckets, metrics = [], []
        for entry in d["buckets"]:
            cycles = [Cycle(light, start, rle_decode(rle), prog) for start, rle, prog in entry["cycles"]]
            buckets.append(make_bucket(light, entry["weekday"], entry["hour"], cycles))
            metrics.append(BucketMetrics.from_dict(entry["metrics"]))
        return cls(
            light_id=light,
            timezone=d.get("timezone", "UTC"),
            excluded=d.get("excluded", False),
            exclusion_reason=d.get("exclusion_reason"),
            reconstruct=d.get("reconstruct", {}),
            validation=d.get("validation", {}),
            detector_changes=d.get("detector_changes", [0] * WEEK_SLOTS),
            buckets=buckets,
            metrics=metrics,
        )


def light_path(store: Union[str, Path], light_id: str) -> Path:
    return Path(store) / "lights" / (quote(light_id, safe="") + ".json")


def write_light(store: Union[str, Path], record: LightRecord) -> Path:
    path = light_path(store, record.light_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(dumps(record.to_dict()), encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_light(path: Union[str, Path]) -> LightRecord:
    with open(path, encoding="utf-8") as fh:
        return LightRecord.from_dict(json.load(fh))


def light_ids(store: Union[str, Path]) -> list[str]:
    d = Path(store) / "lights"
    if not d.is_dir():
        return []
    return sorted(unquote(p.name[:-5]) for p in d.glob("*.json"))


def iter_store(store: Union[str, Path]) -> Iterator[LightRecord]:
    """All light records in light-id order."""
    for light in light_ids(store):
        yield read_light(light_path(store, light))


def write_manifest(store: Union[str, Path], manifest: dict) -> None:
    Path(store).mkdir(parents=True, exist_ok=True)
    (Path(store) / MANIFEST).write_text(dumps(manifest), encoding="utf-8")


def read_manifest(store: Union[str, Path]) -> dict:
    path = Path(store) / MANIFEST
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))
