"""Append-only persistence for event logs plus versioned config documents.

Layout under the store directory:

    segments/segment-00000000.jsonl   event records, one canonical JSON line each
    docs/rules.json                   {"version": n, "body": {...}}
    docs/gallery.json

Records are immutable once written; segments rotate at a fixed record
count. On reopen the segments are replayed to rebuild the in-memory index;
a torn trailing record (interrupted write) is truncated away, while
corruption anywhere else refuses to open rather than silently dropping
data. Sequence numbers stay gapless across restarts.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from pal import perception
from pal import rules as rules_mod
from pal.errors import InvalidRange, IoFailure, NotFound, SchemaError, StoreClosed, VersionConflict
from pal.events import Event, dumps_canonical, event_from_record

SEGMENT_MAX_RECORDS = 10_000
FLUSH_EVERY_RECORDS = 100
FLUSH_INTERVAL_S = 1.0

DOCUMENT_KINDS = ("rules", "gallery")


@dataclass(frozen=True)
class Query:
    from_ms: int
    to_ms: int
    kinds: Optional[frozenset] = None
    limit: Optional[int] = None
    after: Optional[tuple[int, int]] = None  # continuation: (t_ms, seq) of last seen

    def __post_init__(self):
        if self.from_ms > self.to_ms:
            raise InvalidRange(f"from_ms {self.from_ms} > to_ms {self.to_ms}")
        if self.limit is not None and self.limit <= 0:
            raise InvalidRange("limit must be positive")


@dataclass(frozen=True)
class QueryResult:
    records: list[Event]
    next_token: Optional[tuple[int, int]]  # pass back as Query.after to resume


def _segment_name(index: int) -> str:
    return f"segment-{index:08d}.jsonl"


class EventStore:
    """Single-writer, many-reader event log with range queries."""

    def __init__(
        self,
        path,
        segment_max_records: int = SEGMENT_MAX_RECORDS,
        flush_every: int = FLUSH_EVERY_RECORDS,
        flush_interval_s: float = FLUSH_INTERVAL_S,
        fsync: bool = True,
    ):
        self.path = Path(path)
        self.segment_dir = self.path / "segments"
        self.docs_dir = self.path / "docs"
        self.segment_max_records = segment_max_records
        self.flush_every = flush_every
        self.flush_interval_s = flush_interval_s
        self.fsync = fsync

        self._lock = threading.RLock()
        self._events: list[Event] = []
        self._closed = False
        self._fh = None
        self._segment_index = 0
        self._records_in_segment = 0
        self._pending = 0
        self._last_flush = time.monotonic()

        self.segment_dir.mkdir(parents=True, exist_ok=True)
        self.docs_dir.mkdir(parents=True, exist_ok=True)
        self._recover()

    # ------------------------------------------------------------- recovery

    def _recover(self):
        names = sorted(p.name for p in self.segment_dir.glob("segment-*.jsonl"))
        expected_seq = 0
        for i, name in enumerate(names):
            is_last = i == len(names) - 1
            seg_path = self.segment_dir / name
            data = seg_path.read_bytes()
            offset = 0
            records = 0
            while offset < len(data):
                newline = data.find(b"\n", offset)
                if newline == -1:
                    if is_last:
                        # torn trailing record: truncate it away
                        with open(seg_path, "r+b") as fh:
                            fh.truncate(offset)
                        break
                    raise IoFailure(f"{name}: unterminated record mid-store")
                line = data[offset:newline]
                try:
                    record = json.loads(line)
                    event = event_from_record(record)
                    if event.seq is None:
                        raise ValueError("record missing seq")
                except (ValueError, KeyError) as exc:
                    if is_last and newline == len(data) - 1 and offset + len(line) + 1 == len(data):
                        # corrupt final record (e.g. partially overwritten): drop it
                        with open(seg_path, "r+b") as fh:
                            fh.truncate(offset)
                        break
                    raise IoFailure(f"{name}: corrupt record: {exc}") from exc
                if event.seq != expected_seq:
                    raise IoFailure(f"{name}: seq {event.seq}, expected {expected_seq}")
                self._events.append(event)
                expected_seq += 1
                records += 1
                offset = newline + 1
            self._segment_index = i
            self._records_in_segment = records
        if names:
            if self._records_in_segment >= self.segment_max_records:
                self._segment_index += 1
                self._records_in_segment = 0
            self._fh = open(self.segment_dir / _segment_name(self._segment_index), "ab")
        else:
            self._fh = open(self.segment_dir / _segment_name(0), "ab")

    # --------------------------------------------------------------- writes

    @property
    def head_seq(self) -> int:
        """Sequence number of the newest record, -1 when empty."""
        with self._lock:
            return len(self._events) - 1

    def append(self, event: Event) -> int:
        with self._lock:
            if self._closed:
                raise StoreClosed("store is closed")
            seq = len(self._events)
            if event.seq is not None and event.seq != seq:
                raise IoFailure(f"event carries seq {event.seq}, store is at {seq}")
            stored = event.with_seq(seq)
            self._events.append(stored)
            if self._records_in_segment >= self.segment_max_records:
                self._rotate()
            self._fh.write((stored.to_line() + "\n").encode("utf-8"))
            self._records_in_segment += 1
            self._pending += 1
            now = time.monotonic()
            if self._pending >= self.flush_every or now - self._last_flush >= self.flush_interval_s:
                self._flush_locked()
            return seq

    def _rotate(self):
        self._flush_locked()
        self._fh.close()
        self._segment_index += 1
        self._records_in_segment = 0
        self._fh = open(self.segment_dir / _segment_name(self._segment_index), "ab")

    def _flush_locked(self):
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        self._pending = 0
        self._last_flush = time.monotonic()

    def flush(self):
        with self._lock:
            if not self._closed:
                self._flush_locked()

    def close(self):
        with self._lock:
            if self._closed:
                return
            self._flush_locked()
            self._fh.close()
            self._closed = True

    # ---------------------------------------------------------------- reads

    def get(self, seq: int) -> Event:
        with self._lock:
            if 0 <= seq < len(self._events):
                return self._events[seq]
        raise NotFound(f"seq {seq}")

    def events_after(self, seq: int, limit: int) -> list[Event]:
        with self._lock:
            start = seq + 1
            return self._events[start : start + limit]

    def query(self, q: Query) -> QueryResult:
        with self._lock:
            snapshot = list(self._events)
        matches = [
            e
            for e in snapshot
            if q.from_ms <= e.t_ms < q.to_ms and (q.kinds is None or e.kind in q.kinds)
        ]
        matches.sort(key=lambda e: (e.t_ms, e.seq))
        if q.after is not None:
            matches = [e for e in matches if (e.t_ms, e.seq) > q.after]
        if q.limit is not None and len(matches) > q.limit:
            kept = matches[: q.limit]
            return QueryResult(records=kept, next_token=(kept[-1].t_ms, kept[-1].seq))
        return QueryResult(records=matches, next_token=None)

    # ------------------------------------------------------------ documents

    def _doc_path(self, kind: str) -> Path:
        return self.docs_dir / f"{kind}.json"

    def _validate_document(self, kind: str, body):
        if kind == "rules":
            rules_mod.parse_rules_dict(body)
        elif kind == "gallery":
            perception.parse_gallery(body)
        else:
            raise SchemaError("$", f"unknown document kind {kind!r}")

    def get_document(self, kind: str) -> tuple[int, object]:
        """Returns (version, body); version 0 with empty body when unset."""
        if kind not in DOCUMENT_KINDS:
            raise SchemaError("$", f"unknown document kind {kind!r}")
        path = self._doc_path(kind)
        if not path.exists():
            return 0, {} if kind == "rules" else []
        with self._lock:
            data = json.loads(path.read_text(encoding="utf-8"))
        return int(data["version"]), data["body"]

    def put_document(self, kind: str, body, expected_version: Optional[int] = None) -> int:
        """Compare-and-set write; returns the new version."""
        self._validate_document(kind, body)
        with self._lock:
            current, _ = self.get_document(kind)
            if expected_version is not None and expected_version != current:
                raise VersionConflict(f"{kind} is at version {current}, not {expected_version}")
            version = current + 1
            path = self._doc_path(kind)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(
                dumps_canonical({"version": version, "body": body}), encoding="utf-8"
            )
            os.replace(tmp, path)
            return version
