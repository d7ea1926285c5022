"""Trace files, the virtual clock, and the synthetic PPG generator that
anchors the HRV validation harness.

A trace is UTF-8 JSON lines: one header record, then one event per line
with non-decreasing timestamps. PPG blocks may inline their samples or
carry them base64-encoded (little-endian float32).
"""

from __future__ import annotations

import base64
import json
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pal.errors import InvalidParams, ParseError, TimestampRegression
from pal.events import ALL_KINDS, TRACE_KINDS, Event, dumps_canonical, event_from_record
from pal.signal import PpgWindow

SCHEMA_VERSION = 1

# Pulse morphology: asymmetric Gaussian, 80 ms foot-to-apex rise and 200 ms
# apex fall span (sigma = span / 2). Beat times mark the pulse foot.
PULSE_RISE_MS = 80.0
PULSE_FALL_MS = 200.0

_SYNTH_START_OFFSET_MS = 500.0
_SYNTH_END_MARGIN_MS = 400.0
_WANDER_HZ = 0.2


@dataclass(frozen=True)
class SynthParams:
    duration_s: float = 30.0
    mean_rr_ms: float = 800.0
    rr_sd_ms: float = 50.0
    snr_db: float = 10.0
    baseline_wander_amp: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidParams("duration_s must be positive")
        if self.mean_rr_ms <= 0:
            raise InvalidParams("mean_rr_ms must be positive")
        if self.rr_sd_ms < 0:
            raise InvalidParams("rr_sd_ms must be non-negative")
        if self.baseline_wander_amp < 0:
            raise InvalidParams("baseline_wander_amp must be non-negative")
        if math.isnan(self.snr_db):
            raise InvalidParams("snr_db must be a number or +inf")


def synth_ppg(
    params: SynthParams, sample_rate_hz: float = 100.0, start_ms: int = 0
) -> tuple[PpgWindow, np.ndarray, np.ndarray]:
    """Generate a PPG block with exact ground truth.

    Returns (window, rr_series_ms, beat_times_ms). Beat times mark each
    pulse foot (apex minus two rise sigmas, the steepest-upstroke onset);
    the RR series is their consecutive difference. White noise is scaled to
    `snr_db` against the clean pulse train's mean power; baseline wander is
    a 0.2 Hz sinusoid.
    """
    if sample_rate_hz <= 0:
        raise InvalidParams("sample_rate_hz must be positive")
    rng = np.random.default_rng(params.seed)
    duration_ms = params.duration_s * 1000.0
    n = int(params.duration_s * sample_rate_hz)
    if n < 2:
        raise InvalidParams("duration too short for the sample rate")
    t = np.arange(n) / sample_rate_hz * 1000.0

    feet = [_SYNTH_START_OFFSET_MS]
    rr_list: list[float] = []
    while True:
        if params.rr_sd_ms > 0:
            rr = float(np.clip(rng.normal(params.mean_rr_ms, params.rr_sd_ms), 300.0, 2000.0))
        else:
            rr = params.mean_rr_ms
        nxt = feet[-1] + rr
        if nxt > duration_ms - _SYNTH_END_MARGIN_MS:
            break
        feet.append(nxt)
        rr_list.append(rr)
    beat_times = np.array(feet)

    rise_sigma = PULSE_RISE_MS / 2.0
    fall_sigma = PULSE_FALL_MS / 2.0
    clean = np.zeros(n)
    for foot in beat_times:
        apex = foot + 2.0 * rise_sigma
        mask = (t > apex - 5 * rise_sigma) & (t < apex + 4 * fall_sigma)
        tt = t[mask]
        clean[mask] += np.where(
            tt < apex,
            np.exp(-0.5 * ((tt - apex) / rise_sigma) ** 2),
            np.exp(-0.5 * ((tt - apex) / fall_sigma) ** 2),
        )

    x = clean.copy()
    if math.isfinite(params.snr_db):
        signal_power = float(np.mean(clean * clean))
        noise_sd = math.sqrt(signal_power / 10 ** (params.snr_db / 10.0))
        x = x + rng.normal(0.0, noise_sd, n)
    if params.baseline_wander_amp > 0:
        x = x + params.baseline_wander_amp * np.sin(2 * np.pi * _WANDER_HZ * t / 1000.0)

    window = PpgWindow(start_ms=start_ms, sample_rate_hz=sample_rate_hz, samples=x)
    return window, np.array(rr_list), beat_times + start_ms


# ------------------------------------------------------------------- clock

class VirtualClock:
    """Simulation time; advances only via trace timestamps and deadlines."""

    def __init__(self, start_ms: int = 0, speed: str = "max"):
        if speed not in ("realtime", "max"):
            raise ValueError(f"unknown speed {speed!r}")
        self.now_ms = start_ms
        self.speed = speed

    def advance_to(self, t_ms: int):
        if t_ms < self.now_ms:
            raise ValueError(f"clock cannot regress from {self.now_ms} to {t_ms}")
        if self.speed == "realtime" and t_ms > self.now_ms:
            time.sleep((t_ms - self.now_ms) / 1000.0)
        self.now_ms = t_ms


# ------------------------------------------------------------------- traces

@dataclass
class Trace:
    header: dict = field(default_factory=lambda: {"schema_version": SCHEMA_VERSION})
    events: list[Event] = field(default_factory=list)

    @property
    def default_sample_rate_hz(self) -> float:
        return float(self.header.get("sample_rate_hz", 100.0))

    def end_ms(self) -> int:
        return self.events[-1].t_ms if self.events else 0


def encode_samples(samples) -> str:
    return base64.b64encode(np.asarray(samples, dtype="<f4").tobytes()).decode("ascii")


def decode_samples(data: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(data), dtype="<f4").astype(np.float64)


_PAYLOAD_REQUIRED = {
    "ppg": (),
    "imu": (),
    "location": ("lat", "lon"),
    "activity": ("kind",),
    "tap": (),
    "image": ("image_ref",),
    "note": (),
}


def _validate_payload(kind: str, payload, line_no: int):
    if not isinstance(payload, dict):
        raise ParseError(line_no, "payload must be an object")
    for key in _PAYLOAD_REQUIRED.get(kind, ()):
        if key not in payload:
            raise ParseError(line_no, f"{kind} payload missing {key!r}")
    if kind == "ppg" and "samples" not in payload and "samples_b64" not in payload:
        raise ParseError(line_no, "ppg payload needs samples or samples_b64")
    if kind == "imu" and "magnitude" not in payload and "magnitude_b64" not in payload:
        raise ParseError(line_no, "imu payload needs magnitude or magnitude_b64")


def parse_trace_lines(lines, strict_kinds: bool = True) -> Trace:
    header: Optional[dict] = None
    events: list[Event] = []
    last_t = None
    allowed = TRACE_KINDS if strict_kinds else ALL_KINDS
    for line_no, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, f"invalid JSON: {exc}") from exc
        if not isinstance(record, dict):
            raise ParseError(line_no, "expected an object")
        if header is None:
            if "schema_version" not in record:
                raise ParseError(line_no, "first record must be a header with schema_version")
            if record["schema_version"] != SCHEMA_VERSION:
                raise ParseError(line_no, f"unsupported schema_version {record['schema_version']!r}")
            header = record
            continue
        if "t_ms" not in record or "kind" not in record:
            raise ParseError(line_no, "event needs t_ms and kind")
        kind = record["kind"]
        if kind not in allowed:
            raise ParseError(line_no, f"unknown event kind {kind!r}")
        t_ms = record["t_ms"]
        if not isinstance(t_ms, int) or isinstance(t_ms, bool) or t_ms < 0:
            raise ParseError(line_no, "t_ms must be a non-negative integer")
        if last_t is not None and t_ms < last_t:
            raise TimestampRegression(line_no, f"t_ms {t_ms} after {last_t}")
        last_t = t_ms
        payload = record.get("payload", {})
        if strict_kinds:
            _validate_payload(kind, payload, line_no)
        events.append(Event(t_ms=t_ms, kind=kind, payload=payload, seq=record.get("seq")))
    if header is None:
        header = {"schema_version": SCHEMA_VERSION}
    return Trace(header=header, events=events)


def load_trace(path) -> Trace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_lines(fh)


def dump_trace(trace: Trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(trace.header) + "\n")
        for event in trace.events:
            fh.write(event.to_line() + "\n")


def write_event_log(events, path):
    with open(path, "w", encoding="utf-8") as fh:
        for event in events:
            fh.write(event.to_line() + "\n")


def event_log_lines(events) -> str:
    return "".join(event.to_line() + "\n" for event in events)


def load_event_log(path) -> list[Event]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc}") from exc
            events.append(event_from_record(record))
    return events
