import json

import pytest

from helpers import T0, chain, run_pipeline
from signalstab.bucket import bucketize, flatten
from signalstab.metrics import bucket_metrics
from signalstab.simulate import Level, ProgramSpec, simulate
from signalstab.store import FORMAT, LightRecord, dumps, iter_store, light_ids, read_light, write_light


def test_roundtrip_through_disk(tmp_path):
    spec = ProgramSpec("tl/odd id", Level.PARTIALLY_ADAPTIVE, extension_range_s=(0, 5), demand_rate=200, seed=2)
    record = run_pipeline(simulate(spec, T0, 3 * 3600))["tl/odd id"]
    path = write_light(tmp_path, record)
    assert path.name == "tl%2Fodd%20id.json"
    back = read_light(path)
    assert back == record
    assert light_ids(tmp_path) == ["tl/odd id"]
    assert list(iter_store(tmp_path)) == [record]


def test_layout(tmp_path):
    cycles = chain("GGGRR", "GGGRR")
    buckets = flatten(bucketize(cycles))
    record = LightRecord("tl", buckets=buckets, metrics=[bucket_metrics(b) for b in buckets])
    doc = json.loads(write_light(tmp_path, record).read_text())
    assert doc["format"] == FORMAT
    assert len(doc["buckets"]) == 168
    sat0 = doc["buckets"][5 * 24]
    assert (sat0["weekday"], sat0["hour"]) == (5, 0)
    assert sat0["cycles"] == [[T0, "G3R2", None], [T0 + 5, "G3R2", None]]
    assert sat0["metrics"]["wait_time_diversity"] == "1/1"
    assert doc["buckets"][0]["cycles"] == []


def test_excluded_light_keeps_empty_buckets():
    rec = LightRecord("x", excluded=True, exclusion_reason="too many removals")
    doc = rec.to_dict()
    assert all(b["cycles"] == [] for b in doc["buckets"])
    assert LightRecord.from_dict(doc).excluded


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}\n'


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        LightRecord.from_dict({"format": "something-else/9"})


def test_empty_store(tmp_path):
    assert light_ids(tmp_path / "nothing") == []
