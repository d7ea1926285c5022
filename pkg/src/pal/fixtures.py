"""Deterministic sample fixtures: the bundled application-C trace (a
sitting session with one scripted HRV dip and two activity transitions)
plus its rules document and a few sample embeddings.

Regenerate with:  python -m pal.fixtures --dir fixtures
The files are bit-stable for a given seed, so the frozen golden log stays
valid.
"""

from __future__ import annotations

import argparse
import json
import math
from pathlib import Path

import numpy as np

from pal.events import Event, dumps_canonical
from pal.replay import (
    PULSE_FALL_MS,
    PULSE_RISE_MS,
    Trace,
    dump_trace,
    encode_samples,
)

FIXTURE_SEED = 20_240_101

MIN = 60_000

# scripted session timeline (ms)
PPG_START_MS = 25 * MIN
PPG_END_MS = 50 * MIN
DIP_START_MS = 40 * MIN
DIP_END_MS = 44 * MIN
WALK_AT_MS = 52 * MIN
SESSION_END_MS = 85 * MIN

SAMPLE_RATE_HZ = 50.0
SNR_DB = 15.0
WANDER_AMP = 0.3
IDEAL_RR_SD = 50.0
DIP_RR_SD = 3.0
MEAN_RR = 800.0
BLOCK_MS = 10_000


def _scripted_ppg(rng: np.random.Generator) -> np.ndarray:
    """One contiguous PPG strip from PPG_START to PPG_END with the dip."""
    n = int((PPG_END_MS - PPG_START_MS) / 1000.0 * SAMPLE_RATE_HZ)
    t = PPG_START_MS + np.arange(n) * 1000.0 / SAMPLE_RATE_HZ

    feet = [PPG_START_MS + 500.0]
    while True:
        sd = DIP_RR_SD if DIP_START_MS <= feet[-1] < DIP_END_MS else IDEAL_RR_SD
        rr = float(np.clip(rng.normal(MEAN_RR, sd), 300.0, 2000.0))
        nxt = feet[-1] + rr
        if nxt > PPG_END_MS - 400.0:
            break
        feet.append(nxt)

    rise_sigma = PULSE_RISE_MS / 2.0
    fall_sigma = PULSE_FALL_MS / 2.0
    clean = np.zeros(n)
    for foot in feet:
        apex = foot + 2.0 * rise_sigma
        mask = (t > apex - 5 * rise_sigma) & (t < apex + 4 * fall_sigma)
        tt = t[mask]
        clean[mask] += np.where(
            tt < apex,
            np.exp(-0.5 * ((tt - apex) / rise_sigma) ** 2),
            np.exp(-0.5 * ((tt - apex) / fall_sigma) ** 2),
        )
    noise_sd = math.sqrt(float(np.mean(clean * clean)) / 10 ** (SNR_DB / 10.0))
    x = clean + rng.normal(0.0, noise_sd, n)
    x = x + WANDER_AMP * np.sin(2 * np.pi * 0.2 * t / 1000.0)
    return x


def build_application_c_trace(seed: int = FIXTURE_SEED) -> Trace:
    rng = np.random.default_rng(seed)
    events: list[Event] = [Event(0, "activity", {"kind": "still"})]

    x = _scripted_ppg(rng)
    block = int(BLOCK_MS / 1000.0 * SAMPLE_RATE_HZ)
    for i in range(0, len(x), block):
        chunk = x[i : i + block]
        t_ms = PPG_START_MS + int(i * 1000.0 / SAMPLE_RATE_HZ)
        events.append(
            Event(
                t_ms,
                "ppg",
                {"samples_b64": encode_samples(chunk), "sample_rate_hz": SAMPLE_RATE_HZ},
            )
        )

    events.append(Event(WALK_AT_MS, "activity", {"kind": "walking"}))
    events.append(Event(SESSION_END_MS, "note", {"text": "end of scripted session"}))
    events.sort(key=lambda e: e.t_ms)
    return Trace(
        header={
            "schema_version": 1,
            "sample_rate_hz": SAMPLE_RATE_HZ,
            "description": "sitting session with one scripted HRV dip and two activity transitions",
        },
        events=events,
    )


APPLICATION_C_RULES = {
    "schema_version": 1,
    "hrv_range": [20.0, 100.0],
    "rules": [
        {
            "id": "calm-breath",
            "enabled": True,
            "trigger": {"type": "hrv_out_of_range", "lo_ms": 20, "hi_ms": 100},
            "conditions": [{"type": "activity_is", "kind": "still"}],
            "actions": [
                {"type": "play_audio", "clip_id": "calm_breath"},
                {"type": "set_sampling_mode", "mode": "frequent"},
            ],
            "cooldown_ms": 300_000,
        }
    ],
    "scheduler": {
        "normal_interval_ms": 900_000,
        "frequent_interval_ms": 180_000,
        "linger": True,
        "location_threshold_m": 100.0,
    },
}


def sample_embeddings(seed: int = FIXTURE_SEED, count: int = 3, dim: int = 128) -> list:
    rng = np.random.default_rng(seed + 1)
    base = rng.normal(size=dim)
    out = []
    for _ in range(count):
        vec = base + rng.normal(scale=0.05, size=dim)
        out.append((vec / np.linalg.norm(vec)).tolist())
    return out


def write_fixtures(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    trace_path = directory / "application_c.jsonl"
    dump_trace(build_application_c_trace(), trace_path)
    written.append(trace_path)

    rules_path = directory / "application_c_rules.json"
    rules_path.write_text(json.dumps(APPLICATION_C_RULES, indent=2) + "\n", encoding="utf-8")
    written.append(rules_path)

    emb_path = directory / "sample_embeddings.json"
    emb_path.write_text(dumps_canonical(sample_embeddings()) + "\n", encoding="utf-8")
    written.append(emb_path)
    return written


def main(argv=None):
    parser = argparse.ArgumentParser(description="regenerate bundled fixtures")
    parser.add_argument("--dir", default="fixtures")
    args = parser.parse_args(argv)
    for path in write_fixtures(args.dir):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
