"""Operator entry points.

    pal replay --trace T.jsonl --rules R.json --out LOG.jsonl [--seed N] [--speed max]
    pal serve --store DIR [--port P] [--host H] [--ui DIR]
    pal eval-hrv [--sessions N] [--mean-rr 800 | 750:850] [--rr-sd 50] ...
    pal eval-fov --view-w W --view-h H --miss-left L --miss-top T
    pal rules-validate RULES.json
    pal enroll --name NAME --embeddings FILE.json

Exit codes: 0 ok, 1 trace parse error, 2 schema/validation error, 3 I/O.
Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from pal import engine, perception, replay
from pal import rules as rules_mod
from pal import signal as sig
from pal.errors import (
    EmptyEnrollment,
    InvalidInput,
    InvalidParams,
    InvalidRange,
    IoFailure,
    PalError,
    ParseError,
    SchemaError,
    TimestampRegression,
)
from pal.events import dumps_canonical

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_SCHEMA = 2
EXIT_IO = 3

# a detected beat within this window of a true beat counts as found
MATCH_TOLERANCE_MS = 150.0


@dataclass(frozen=True)
class FovInput:
    view_w: float
    view_h: float
    miss_left: float
    miss_top: float

    def __post_init__(self):
        if self.view_w <= 0 or self.view_h <= 0:
            raise InvalidInput("view dimensions must be positive")
        if not (0 <= self.miss_left < self.view_w):
            raise InvalidInput("miss_left must be in [0, view_w)")
        if not (0 <= self.miss_top < self.view_h):
            raise InvalidInput("miss_top must be in [0, view_h)")


def fov_coverage(inp: FovInput) -> float:
    """Fraction of the focus view captured when the camera misses a left
    band and a top band of the reference view."""
    return ((inp.view_w - inp.miss_left) * (inp.view_h - inp.miss_top)) / (
        inp.view_w * inp.view_h
    )


# ----------------------------------------------------------------- eval-hrv

def _beat_sensitivity(true_beats: np.ndarray, detected: np.ndarray) -> float:
    if len(true_beats) == 0:
        return 1.0
    hits = sum(
        1 for b in true_beats if len(detected) and np.min(np.abs(detected - b)) <= MATCH_TOLERANCE_MS
    )
    return hits / len(true_beats)


def eval_hrv(
    sessions: int,
    duration_s: float = 30.0,
    mean_rr_ms: tuple[float, float] = (800.0, 800.0),
    rr_sd_ms: tuple[float, float] = (50.0, 50.0),
    snr_db: float = 10.0,
    wander: float = 0.3,
    seed: int = 1000,
    cfg: sig.SignalConfig = sig.SignalConfig(),
) -> dict:
    """Synthesize sessions, run the full pipeline, correlate against truth.

    Range parameters are (lo, hi); per-session values are drawn uniformly
    with a generator derived from the master seed, so the whole report is a
    deterministic function of its arguments.
    """
    if sessions < 2:
        raise InvalidParams("need at least 2 sessions")
    draw = np.random.default_rng(seed)
    rows = []
    for i in range(sessions):
        mean_rr = float(draw.uniform(*mean_rr_ms)) if mean_rr_ms[0] != mean_rr_ms[1] else mean_rr_ms[0]
        rr_sd = float(draw.uniform(*rr_sd_ms)) if rr_sd_ms[0] != rr_sd_ms[1] else rr_sd_ms[0]
        params = replay.SynthParams(
            duration_s=duration_s,
            mean_rr_ms=mean_rr,
            rr_sd_ms=rr_sd,
            snr_db=snr_db,
            baseline_wander_amp=wander,
            seed=seed + i,
        )
        window, rr_series, beats = replay.synth_ppg(params)
        peaks = sig.find_peaks(
            sig.enhance(sig.detrend(sig.denoise(window, cfg), cfg)), cfg
        )
        row = {
            "session": i,
            "seed": params.seed,
            "mean_rr_ms": mean_rr,
            "rr_sd_ms": rr_sd,
            "n_true_beats": len(beats),
            "n_detected": len(peaks),
            "sensitivity": _beat_sensitivity(beats, peaks.peak_times_ms),
        }
        truth_error = None
        try:
            true_metrics = sig.compute_hrv(sig.NnSeries(rr_series))
            row["rmssd_true"] = true_metrics.rmssd_ms
            row["sdnn_true"] = true_metrics.sdnn_ms
        except PalError as exc:
            truth_error = str(exc)
        try:
            est = sig.compute_hrv(sig.peaks_to_nn(peaks, cfg))
            row["rmssd_est"] = est.rmssd_ms
            row["sdnn_est"] = est.sdnn_ms
        except PalError as exc:
            row["error"] = str(exc)
        if truth_error is not None:
            row["error"] = truth_error
        if "rmssd_true" in row and "rmssd_est" in row and row["rmssd_true"] > 0:
            row["relative_error"] = abs(row["rmssd_est"] - row["rmssd_true"]) / row["rmssd_true"]
        rows.append(row)

    complete = [r for r in rows if "rmssd_true" in r and "rmssd_est" in r]
    aggregate: dict = {
        "sessions": sessions,
        "mean_sensitivity": float(np.mean([r["sensitivity"] for r in rows])),
        "pearson_rmssd": None,
        "pearson_sdnn": None,
        "degenerate": False,
    }
    if len(complete) >= 2:
        try:
            aggregate["pearson_rmssd"] = sig.pearson(
                [r["rmssd_true"] for r in complete], [r["rmssd_est"] for r in complete]
            )
            aggregate["pearson_sdnn"] = sig.pearson(
                [r["sdnn_true"] for r in complete], [r["sdnn_est"] for r in complete]
            )
        except PalError as exc:
            aggregate["degenerate"] = True
            aggregate["degenerate_reason"] = str(exc)
    return {
        "config": {
            "sessions": sessions,
            "duration_s": duration_s,
            "mean_rr_ms": list(mean_rr_ms),
            "rr_sd_ms": list(rr_sd_ms),
            "snr_db": snr_db,
            "baseline_wander_amp": wander,
            "seed": seed,
            "signal": cfg.to_dict(),
            "match_tolerance_ms": MATCH_TOLERANCE_MS,
        },
        "sessions": rows,
        "aggregate": aggregate,
    }


# ------------------------------------------------------------------ helpers

def _parse_range(text: str) -> tuple[float, float]:
    if ":" in text:
        lo, _, hi = text.partition(":")
        return (float(lo), float(hi))
    value = float(text)
    return (value, value)


def _print_summary(counts: dict):
    print(
        "snapshots={snapshots} transitions={transitions} "
        "actions={actions} timeouts={timeouts}".format(**counts)
    )


def _load_ruleset(path) -> rules_mod.RuleSet:
    with open(path, "r", encoding="utf-8") as fh:
        return rules_mod.parse_rules(fh.read())


# ----------------------------------------------------------------- commands

def cmd_replay(args) -> int:
    ruleset = _load_ruleset(args.rules) if args.rules else rules_mod.RuleSet()
    trace = replay.load_trace(args.trace)
    log = engine.run(trace, ruleset, seed=args.seed, speed=args.speed)
    if args.out:
        replay.write_event_log(log, args.out)
    counts = log[-1].payload["counts"]
    _print_summary(counts)
    return EXIT_OK


def cmd_eval_hrv(args) -> int:
    cfg = sig.SignalConfig()
    if args.rules:
        cfg = _load_ruleset(args.rules).signal
    report = eval_hrv(
        sessions=args.sessions,
        duration_s=args.duration,
        mean_rr_ms=_parse_range(args.mean_rr),
        rr_sd_ms=_parse_range(args.rr_sd),
        snr_db=float("inf") if args.snr == "inf" else float(args.snr),
        wander=args.wander,
        seed=args.seed,
        cfg=cfg,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(report) + "\n")
    agg = report["aggregate"]
    print(f"sessions={agg['sessions']} mean_sensitivity={agg['mean_sensitivity']:.4f}")
    if agg["degenerate"]:
        print(f"pearson: degenerate ({agg['degenerate_reason']})")
    else:
        print(f"pearson_rmssd={agg['pearson_rmssd']:.4f} pearson_sdnn={agg['pearson_sdnn']:.4f}")
    for row in report["sessions"]:
        rel = row.get("relative_error")
        print(
            f"  session {row['session']:02d}: sens={row['sensitivity']:.3f} "
            f"rmssd_true={row.get('rmssd_true', float('nan')):.2f} "
            f"rmssd_est={row.get('rmssd_est', float('nan')):.2f} "
            f"rel_err={rel if rel is None else round(rel, 4)}"
        )
    return EXIT_OK


def cmd_eval_fov(args) -> int:
    inp = FovInput(args.view_w, args.view_h, args.miss_left, args.miss_top)
    coverage = fov_coverage(inp)
    print(f"coverage = {coverage:.4f} (~{coverage * 100:.1f}% of the focus view)")
    return EXIT_OK


def cmd_rules_validate(args) -> int:
    ruleset = _load_ruleset(args.path)
    warnings = rules_mod.validate_rules(ruleset)
    for warning in warnings:
        print(f"warning: {warning}")
    print(f"{len(ruleset.rules)} rule(s), {len(warnings)} warning(s)")
    return EXIT_OK


def cmd_enroll(args) -> int:
    with open(args.embeddings, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list) or not raw:
        raise EmptyEnrollment(f"{args.embeddings} holds no embeddings")
    embeddings = [perception.Embedding.normalized(vec) for vec in raw]
    record = perception.enroll(args.name, embeddings, k_max=args.k_max)
    print(dumps_canonical(record.to_dict()))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from pal.api import create_app
    from pal.store import EventStore

    store = EventStore(args.store)
    app = create_app(store, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    store.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("replay", help="replay a trace through the engine")
    p.add_argument("--trace", required=True)
    p.add_argument("--rules", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speed", choices=("realtime", "max"), default="max")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("eval-hrv", help="synthetic HRV validation harness")
    p.add_argument("--sessions", type=int, default=20)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--mean-rr", default="800", help="ms, fixed (800) or range (750:850)")
    p.add_argument("--rr-sd", default="50", help="ms, fixed or range")
    p.add_argument("--snr", default="10", help="dB, or 'inf' for noise-free")
    p.add_argument("--wander", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--rules", default=None, help="take the signal config from this document")
    p.add_argument("--out", default=None, help="write the machine-readable report here")
    p.set_defaults(func=cmd_eval_hrv)

    p = sub.add_parser("eval-fov", help="camera field-of-view coverage")
    p.add_argument("--view-w", type=float, required=True)
    p.add_argument("--view-h", type=float, required=True)
    p.add_argument("--miss-left", type=float, default=0.0)
    p.add_argument("--miss-top", type=float, default=0.0)
    p.set_defaults(func=cmd_eval_fov)

    p = sub.add_parser("rules-validate", help="validate a rules document")
    p.add_argument("path")
    p.set_defaults(func=cmd_rules_validate)

    p = sub.add_parser("enroll", help="build a person record from embeddings")
    p.add_argument("--name", required=True)
    p.add_argument("--embeddings", required=True, help="JSON file: list of vectors")
    p.add_argument("--k-max", type=int, default=3)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("serve", help="run the configuration/streaming service")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=int(os.environ.get("PAL_PORT", "8400")))
    p.add_argument("--ui", default=None, help="directory of built dashboard assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, TimestampRegression) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except SchemaError as exc:
        print(f"schema error at {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InvalidParams, InvalidInput, InvalidRange, EmptyEnrollment, PalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (FileNotFoundError, IsADirectoryError, PermissionError, IoFailure, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
