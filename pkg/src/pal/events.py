"""The universal event record flowing through traces, the engine and the log.

Wire format is one canonical JSON object per line: keys sorted, compact
separators, so identical runs produce byte-identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

# kinds that may appear in input traces
TRACE_KINDS = ("ppg", "imu", "location", "activity", "tap", "image", "note")

# kinds the engine derives while running
DERIVED_KINDS = (
    "run_start",
    "run_end",
    "transition",
    "snapshot",
    "hrv_metric",
    "detection",
    "face",
    "timeout",
    "action",
    "rule_timer",
)

ALL_KINDS = TRACE_KINDS + DERIVED_KINDS


@dataclass(frozen=True)
class Event:
    t_ms: int
    kind: str
    payload: dict = field(default_factory=dict)
    seq: Optional[int] = None

    def with_seq(self, seq: int) -> "Event":
        return Event(self.t_ms, self.kind, self.payload, seq)

    def to_record(self) -> dict:
        record: dict[str, Any] = {"t_ms": self.t_ms, "kind": self.kind, "payload": self.payload}
        if self.seq is not None:
            record["seq"] = self.seq
        return record

    def to_line(self) -> str:
        return dumps_canonical(self.to_record())


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def event_from_record(record: dict) -> Event:
    return Event(
        t_ms=int(record["t_ms"]),
        kind=str(record["kind"]),
        payload=record.get("payload", {}),
        seq=record.get("seq"),
    )
