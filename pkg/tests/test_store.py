import json

import numpy as np
import pytest

from pal.errors import InvalidRange, IoFailure, SchemaError, StoreClosed, VersionConflict
from pal.events import Event
from pal.store import EventStore, Query

from oracles import random_rules_doc


def ev(t, kind="note", **payload):
    return Event(t, kind, payload or {"text": "x"})


def open_store(tmp_path, **kw):
    kw.setdefault("fsync", False)  # keep tests fast; fsync exercised separately
    return EventStore(tmp_path / "store", **kw)


# ------------------------------------------------------------------- append

def test_append_assigns_sequential_seqs(tmp_path):
    store = open_store(tmp_path)
    assert store.append(ev(0)) == 0
    assert store.append(ev(1)) == 1
    assert store.head_seq == 1
    store.close()


def test_append_after_close_raises(tmp_path):
    store = open_store(tmp_path)
    store.append(ev(0))
    store.close()
    with pytest.raises(StoreClosed):
        store.append(ev(1))


def test_reopen_preserves_records_and_continues_seq(tmp_path):
    store = open_store(tmp_path)
    for i in range(5):
        store.append(ev(i * 10))
    store.close()
    again = open_store(tmp_path)
    assert again.head_seq == 4
    assert again.append(ev(100)) == 5
    again.close()


def test_segment_rotation(tmp_path):
    store = open_store(tmp_path, segment_max_records=10)
    for i in range(35):
        store.append(ev(i))
    store.close()
    segments = sorted(p.name for p in (tmp_path / "store" / "segments").glob("*.jsonl"))
    assert len(segments) == 4
    again = open_store(tmp_path, segment_max_records=10)
    assert again.head_seq == 34
    assert [e.seq for e in again.events_after(-1, 100)] == list(range(35))
    again.close()


# ----------------------------------------------------------- crash recovery

def test_torn_trailing_record_discarded(tmp_path):
    store = open_store(tmp_path)
    for i in range(7):
        store.append(ev(i))
    store.close()
    seg = next((tmp_path / "store" / "segments").glob("*.jsonl"))
    data = seg.read_bytes()
    seg.write_bytes(data[:-9])  # cut into the last record

    again = open_store(tmp_path)
    assert again.head_seq == 5  # last record dropped, rest intact
    assert again.append(ev(99)) == 6  # seq stays gapless
    again.close()


def test_mid_file_corruption_refuses_to_open(tmp_path):
    store = open_store(tmp_path)
    for i in range(5):
        store.append(ev(i))
    store.close()
    seg = next((tmp_path / "store" / "segments").glob("*.jsonl"))
    lines = seg.read_bytes().splitlines(keepends=True)
    lines[2] = b'{"broken\n'
    seg.write_bytes(b"".join(lines))
    with pytest.raises(IoFailure):
        open_store(tmp_path)


# -------------------------------------------------------------------- query

def test_query_empty_store(tmp_path):
    store = open_store(tmp_path)
    assert store.query(Query(0, 1000)).records == []
    store.close()


def test_query_invalid_range(tmp_path):
    with pytest.raises(InvalidRange):
        Query(10, 5)


def test_query_filters_and_orders(tmp_path):
    store = open_store(tmp_path)
    store.append(ev(5, "hrv_metric", rmssd_ms=50.0))
    store.append(ev(10, "note"))
    store.append(ev(10, "hrv_metric", rmssd_ms=60.0))
    store.append(ev(20, "hrv_metric", rmssd_ms=70.0))
    out = store.query(Query(0, 20, kinds=frozenset({"hrv_metric"})))
    assert [e.t_ms for e in out.records] == [5, 10]  # to_ms exclusive
    assert out.next_token is None
    store.close()


def test_query_pagination_with_continuation(tmp_path):
    store = open_store(tmp_path)
    for i in range(25):
        store.append(ev(i, "note"))
    first = store.query(Query(0, 100, limit=10))
    assert len(first.records) == 10 and first.next_token is not None
    second = store.query(Query(0, 100, limit=100, after=first.next_token))
    assert len(second.records) == 15
    seqs = [e.seq for e in first.records + second.records]
    assert seqs == list(range(25))
    store.close()


def test_query_matches_brute_force_on_large_random_log(tmp_path):
    # acceptance-grade oracle: linear scan filter over 1e5 records
    rng = np.random.default_rng(0)
    store = open_store(tmp_path, segment_max_records=20_000)
    kinds = ["note", "hrv_metric", "snapshot", "action", "tap"]
    t = 0
    events = []
    for i in range(100_000):
        t += int(rng.integers(0, 5))
        kind = kinds[int(rng.integers(0, len(kinds)))]
        event = Event(t, kind, {"i": i})
        store.append(event)
        events.append(event.with_seq(i))
    for _ in range(50):
        lo = int(rng.integers(0, t + 1))
        hi = int(rng.integers(lo, t + 2))
        kind_filter = None
        if rng.random() < 0.7:
            kind_filter = frozenset(
                str(k) for k in rng.choice(kinds, size=int(rng.integers(1, 4)), replace=False)
            )
        out = store.query(Query(lo, hi, kinds=kind_filter))
        expected = [
            e for e in events if lo <= e.t_ms < hi and (kind_filter is None or e.kind in kind_filter)
        ]
        expected.sort(key=lambda e: (e.t_ms, e.seq))
        assert [e.seq for e in out.records] == [e.seq for e in expected]
    store.close()


# ---------------------------------------------------------------- documents

def test_put_get_rules_document_roundtrip(tmp_path):
    store = open_store(tmp_path)
    doc = random_rules_doc(np.random.default_rng(1), 3)
    version = store.put_document("rules", doc)
    assert version == 1
    got_version, body = store.get_document("rules")
    assert got_version == 1 and body == doc
    store.close()


def test_stale_version_conflict(tmp_path):
    store = open_store(tmp_path)
    store.put_document("rules", {"rules": []})
    store.put_document("rules", {"rules": []}, expected_version=1)
    with pytest.raises(VersionConflict):
        store.put_document("rules", {"rules": []}, expected_version=1)
    store.close()


def test_gallery_duplicate_person_rejected(tmp_path):
    store = open_store(tmp_path)
    vec = (np.ones(4) / 2.0).tolist()
    record = {"person_id": "a", "name": "A", "centroids": [vec], "enrolled_at_ms": 0}
    with pytest.raises(SchemaError):
        store.put_document("gallery", [record, dict(record)])
    store.close()


def test_invalid_rules_document_rejected(tmp_path):
    store = open_store(tmp_path)
    with pytest.raises(SchemaError):
        store.put_document("rules", {"rules": [{"id": "x"}]})
    store.close()


def test_documents_survive_reopen(tmp_path):
    store = open_store(tmp_path)
    store.put_document("gallery", [])
    store.close()
    again = open_store(tmp_path)
    version, body = again.get_document("gallery")
    assert version == 1 and body == []
    again.close()
