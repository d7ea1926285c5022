"""The deterministic engine loop.

Consumes a trace in timestamp order, interleaving scheduler deadlines
(snapshot timer, rule timers), data-driven HRV window evaluations and
budgeted perception deliveries through one priority queue. At equal
timestamps scheduled items fire before trace events, and insertion order
breaks remaining ties, so a run is a pure function of (trace, rules, seed).
"""

from __future__ import annotations

import heapq
from typing import Callable, Optional

import numpy as np

from pal import context as ctx
from pal import rules as rules_mod
from pal import signal as sig
from pal.errors import PalError
from pal.events import Event
from pal.perception import Embedding, StubProvider, recognize, request_detection
from pal.replay import Trace, VirtualClock, decode_samples


class _PpgSegment:
    """A contiguous PPG run; evaluation grid is anchored at its start."""

    def __init__(self, seg_id: int, t0_ms: int, fs: float):
        self.seg_id = seg_id
        self.t0_ms = t0_ms
        self.fs = fs
        self.samples = np.empty(0)
        self.next_eval_end_ms = None  # set once a full window fits

    def end_ms(self) -> float:
        return self.t0_ms + len(self.samples) / self.fs * 1000.0

    def append(self, samples: np.ndarray):
        self.samples = np.concatenate([self.samples, samples])

    def slice_window(self, end_ms: int, window_ms: float) -> Optional[sig.PpgWindow]:
        n_window = int(round(window_ms * self.fs / 1000.0))
        i_end = int(round((end_ms - self.t0_ms) * self.fs / 1000.0))
        i_start = i_end - n_window
        if i_start < 0 or i_end > len(self.samples):
            return None
        start_ms = int(round(self.t0_ms + i_start * 1000.0 / self.fs))
        return sig.PpgWindow(start_ms=start_ms, sample_rate_hz=self.fs, samples=self.samples[i_start:i_end])


class Engine:
    def __init__(
        self,
        ruleset: rules_mod.RuleSet,
        seed: int = 0,
        speed: str = "max",
        provider=None,
        sink: Optional[Callable[[Event], None]] = None,
        first_seq: int = 0,
    ):
        self.rules = ruleset
        self.seed = seed
        self.provider = provider
        self.gallery = list(ruleset.gallery)
        self.state = ctx.ContextState(linger_enabled=ruleset.scheduler.linger)
        self.clock = VirtualClock(0, speed)
        self.last_fired: dict[str, int] = {}
        self.log: list[Event] = []
        self.sink = sink
        self._next_seq = first_seq
        self.counts = {"snapshots": 0, "transitions": 0, "actions": 0, "timeouts": 0}

        self._heap: list[tuple[int, int, tuple]] = []
        self._order = 0
        self._snapshot_version = 0
        self._rules_version = 0
        self._pending_rules: Optional[rules_mod.RuleSet] = None
        self._pending_gallery: Optional[list] = None
        self.cancelled = False

        self._segments: list[_PpgSegment] = []
        self._imu_blocks: list[tuple[float, float, np.ndarray]] = []  # (t0, fs, mags)

    # ------------------------------------------------------------- plumbing

    def _append(self, t_ms: int, kind: str, payload: dict) -> Event:
        event = Event(t_ms=t_ms, kind=kind, payload=payload, seq=self._next_seq)
        self._next_seq += 1
        self.log.append(event)
        if self.sink is not None:
            self.sink(event)
        return event

    def _push(self, t_ms: int, item: tuple):
        heapq.heappush(self._heap, (max(t_ms, self.clock.now_ms), self._order, item))
        self._order += 1

    def set_rules(self, ruleset: rules_mod.RuleSet):
        """Hot swap, applied atomically between ticks."""
        self._pending_rules = ruleset

    def set_gallery(self, gallery: list):
        self._pending_gallery = list(gallery)

    def _apply_pending(self):
        if self._pending_rules is not None:
            self.rules = self._pending_rules
            self._pending_rules = None
            self._rules_version += 1
            self.state = ctx.ContextState(
                activity=self.state.activity,
                location=self.state.location,
                sampling_mode=self.state.sampling_mode,
                last_snapshot_ms=self.state.last_snapshot_ms,
                hrv_status=self.state.hrv_status,
                linger=self.state.linger,
                linger_enabled=self.rules.scheduler.linger,
            )
            self._schedule_snapshot()
            self._schedule_rule_timers(self.clock.now_ms)
        if self._pending_gallery is not None:
            self.gallery = self._pending_gallery
            self._pending_gallery = None

    # ------------------------------------------------------------ scheduler

    def _schedule_snapshot(self):
        self._snapshot_version += 1
        due = self.state.last_snapshot_ms + self.rules.scheduler.interval_ms(self.state.sampling_mode)
        self._push(due, ("snapshot", self._snapshot_version))

    def _schedule_rule_timers(self, from_ms: int):
        for rule in self.rules.rules:
            if rule.enabled and isinstance(rule.trigger, rules_mod.TimerElapsed):
                self._push(
                    from_ms + rule.trigger.interval_ms,
                    ("rule_timer", rule.id, rule.trigger.interval_ms, self._rules_version),
                )

    def _take_snapshot(self, t_ms: int, cause: str):
        state = self.state
        self._append(
            t_ms,
            "snapshot",
            {
                "cause": cause,
                "activity": state.activity.kind,
                "location": None if state.location is None else ctx.location_desc(state.location),
                "sampling_mode": state.sampling_mode,
            },
        )
        self.counts["snapshots"] += 1
        self.state = ctx.after_snapshot(state, t_ms)
        self._schedule_snapshot()

    def _reschedule_if_mode_changed(self, before: ctx.ContextState):
        if self.state.sampling_mode != before.sampling_mode:
            self._schedule_snapshot()

    # --------------------------------------------------------------- events

    def _evaluate_rules(self, event: Event):
        instances = rules_mod.evaluate(event, self.state, self.rules, self.last_fired)
        fired: set[str] = set()
        for instance in instances:
            self._append(event.t_ms, "action", instance.to_payload())
            self.counts["actions"] += 1
            fired.add(instance.rule_id)
            self._apply_action(instance, event.t_ms)
        for rule_id in fired:
            self.last_fired[rule_id] = event.t_ms

    def _apply_action(self, instance: rules_mod.ActionInstance, t_ms: int):
        action = instance.action
        if isinstance(action, rules_mod.SetSamplingMode):
            before = self.state
            self.state = ctx.set_sampling_mode(self.state, action.mode)
            self._reschedule_if_mode_changed(before)
        elif isinstance(action, rules_mod.CaptureSnapshot):
            self._take_snapshot(t_ms, "action")
        # audio and note actions have no engine-side effect

    def _handle_activity(self, event: Event):
        before = self.state
        self.state, transition = ctx.update_activity(
            self.state, event.payload["kind"], event.t_ms
        )
        if transition is not None:
            tr_event = self._append(event.t_ms, "transition", transition.to_payload())
            self.counts["transitions"] += 1
            self._reschedule_if_mode_changed(before)
            self._take_snapshot(event.t_ms, "transition")
            self._evaluate_rules(tr_event)

    def _handle_location(self, event: Event):
        payload = event.payload
        fix = ctx.LocationState(
            lat=float(payload["lat"]),
            lon=float(payload["lon"]),
            place_id=payload.get("place_id"),
            place_type=payload.get("place_type"),
            since_ms=event.t_ms,
        )
        self.state, transition = ctx.update_location(self.state, fix, self.rules.scheduler)
        if transition is not None:
            tr_event = self._append(event.t_ms, "transition", transition.to_payload())
            self.counts["transitions"] += 1
            self._take_snapshot(event.t_ms, "transition")
            self._evaluate_rules(tr_event)

    def _handle_ppg(self, event: Event, default_fs: float):
        payload = event.payload
        fs = float(payload.get("sample_rate_hz", default_fs))
        if "samples_b64" in payload:
            samples = decode_samples(payload["samples_b64"])
        else:
            samples = np.asarray(payload["samples"], dtype=np.float64)
        if len(samples) == 0:
            return
        segment = self._segments[-1] if self._segments else None
        tolerance_ms = 1.5 * 1000.0 / fs
        if (
            segment is None
            or segment.fs != fs
            or abs(event.t_ms - segment.end_ms()) > tolerance_ms
        ):
            segment = _PpgSegment(len(self._segments), event.t_ms, fs)
            self._segments.append(segment)
        segment.append(samples)

        window_ms = self.rules.signal.hrv_window_s * 1000.0
        hop_ms = self.rules.signal.hrv_hop_s * 1000.0
        if segment.next_eval_end_ms is None:
            segment.next_eval_end_ms = segment.t0_ms + window_ms
        while segment.next_eval_end_ms <= segment.end_ms() + 1e-9:
            end = int(round(segment.next_eval_end_ms))
            self._push(end, ("hrv_eval", segment.seg_id, end))
            segment.next_eval_end_ms += hop_ms

    def _handle_imu(self, event: Event, default_fs: float):
        payload = event.payload
        fs = float(payload.get("sample_rate_hz", default_fs))
        if "magnitude_b64" in payload:
            mags = decode_samples(payload["magnitude_b64"])
        else:
            mags = np.asarray(payload["magnitude"], dtype=np.float64)
        if len(mags):
            self._imu_blocks.append((float(event.t_ms), fs, mags))

    def _imu_in_window(self, start_ms: float, end_ms: float) -> np.ndarray:
        chunks = []
        for t0, fs, mags in self._imu_blocks:
            t_end = t0 + len(mags) / fs * 1000.0
            if t_end < start_ms or t0 > end_ms:
                continue
            times = t0 + np.arange(len(mags)) * 1000.0 / fs
            mask = (times >= start_ms) & (times <= end_ms)
            if mask.any():
                chunks.append(mags[mask])
        return np.concatenate(chunks) if chunks else np.empty(0)

    def _handle_hrv_eval(self, seg_id: int, end_ms: int):
        if self.state.activity.kind != "still":
            return
        segment = self._segments[seg_id]
        window = segment.slice_window(end_ms, self.rules.signal.hrv_window_s * 1000.0)
        if window is None:
            return
        cfg = self.rules.signal
        imu = self._imu_in_window(window.start_ms, end_ms)
        if sig.motion_gate(window, imu, cfg):
            return
        try:
            peaks = sig.find_peaks(sig.enhance(sig.detrend(sig.denoise(window, cfg), cfg)), cfg)
            nn = sig.peaks_to_nn(peaks, cfg)
            metrics = sig.compute_hrv(nn, window_start_ms=window.start_ms, window_end_ms=end_ms)
        except PalError:
            return
        hrv_event = self._append(end_ms, "hrv_metric", metrics.to_payload())
        before = self.state
        self.state = ctx.set_hrv_status(self.state, metrics, self.rules.hrv_range)
        self._reschedule_if_mode_changed(before)
        self._evaluate_rules(hrv_event)

    def _handle_image(self, event: Event):
        if self.provider is None:
            return
        image_ref = event.payload["image_ref"]
        budget = self.rules.perception.budget()
        outcome = request_detection(image_ref, "objects", self.provider, budget)
        self._push(event.t_ms + outcome.latency_ms, ("provider", outcome))
        wants_face = getattr(self.provider, "has_face", lambda ref: True)(image_ref)
        if wants_face:
            outcome = request_detection(image_ref, "faces", self.provider, budget)
            self._push(event.t_ms + outcome.latency_ms, ("provider", outcome))

    def _handle_provider(self, t_ms: int, outcome):
        if outcome.timed_out:
            self._append(
                t_ms,
                "timeout",
                {"call": outcome.kind, "image_ref": outcome.image_ref, "budget_ms": outcome.latency_ms},
            )
            self.counts["timeouts"] += 1
            return
        if outcome.kind == "objects":
            event = self._append(
                t_ms,
                "detection",
                {"image_ref": outcome.image_ref, **outcome.detections.to_payload()},
            )
            self._evaluate_rules(event)
            return
        if outcome.embedding is None:
            return
        result = recognize(outcome.embedding, self.gallery, self.rules.perception.tau)
        event = self._append(
            t_ms, "face", {"image_ref": outcome.image_ref, "result": result.to_payload()}
        )
        self._evaluate_rules(event)

    # ------------------------------------------------------------ main loop

    def _dispatch_scheduled(self, t_ms: int, item: tuple):
        kind = item[0]
        if kind == "snapshot":
            if item[1] == self._snapshot_version:
                self._take_snapshot(t_ms, "timer")
        elif kind == "hrv_eval":
            self._handle_hrv_eval(item[1], item[2])
        elif kind == "provider":
            self._handle_provider(t_ms, item[1])
        elif kind == "rule_timer":
            _, rule_id, interval_ms, version = item
            if version != self._rules_version:
                return
            rule = next((r for r in self.rules.rules if r.id == rule_id), None)
            if rule is None or not rule.enabled:
                return
            event = self._append(t_ms, "rule_timer", {"rule_id": rule_id})
            self._evaluate_rules(event)
            self._push(t_ms + interval_ms, ("rule_timer", rule_id, interval_ms, version))

    def _dispatch_trace_event(self, event: Event, default_fs: float):
        logged = self._append(event.t_ms, event.kind, event.payload)
        if event.kind == "activity":
            self._handle_activity(logged)
        elif event.kind == "location":
            self._handle_location(logged)
        elif event.kind == "ppg":
            self._handle_ppg(logged, default_fs)
        elif event.kind == "imu":
            self._handle_imu(logged, default_fs)
        elif event.kind == "tap":
            self._evaluate_rules(logged)
        elif event.kind == "image":
            self._handle_image(logged)
        # "note" events are log-only

    def run(self, trace: Trace) -> list[Event]:
        default_fs = trace.default_sample_rate_hz
        trace_end = trace.end_ms()
        self._append(0, "run_start", {"schema_version": 1, "seed": self.seed})
        self._schedule_snapshot()
        self._schedule_rule_timers(0)

        index = 0
        events = trace.events
        status = "done"
        while True:
            if self.cancelled:
                status = "cancelled"
                break
            self._apply_pending()
            has_trace = index < len(events)
            has_sched = bool(self._heap)
            if not has_trace and not has_sched:
                break
            use_sched = has_sched and (not has_trace or self._heap[0][0] <= events[index].t_ms)
            if use_sched:
                t_ms, _, item = heapq.heappop(self._heap)
                if not has_trace and item[0] in ("snapshot", "rule_timer") and t_ms > trace_end:
                    # recurring deadlines stop at the end of the trace;
                    # data-driven items (provider, hrv_eval) drain fully
                    continue
                self.clock.advance_to(t_ms)
                self._dispatch_scheduled(t_ms, item)
            else:
                event = events[index]
                index += 1
                self.clock.advance_to(event.t_ms)
                self._dispatch_trace_event(event, default_fs)

        end_ms = max(self.clock.now_ms, trace_end)
        self._append(end_ms, "run_end", {"status": status, "counts": dict(self.counts)})
        return self.log


def build_stub_provider(trace: Trace) -> StubProvider:
    """Collect image annotations from a trace into a deterministic provider."""
    annotations = {}
    for event in trace.events:
        if event.kind == "image":
            annotations[event.payload["image_ref"]] = event.payload.get("annotations", {})
    return StubProvider(annotations)


def run(
    trace: Trace,
    ruleset: rules_mod.RuleSet,
    seed: int = 0,
    speed: str = "max",
    sink: Optional[Callable[[Event], None]] = None,
    provider=None,
) -> list[Event]:
    """Replay a trace through a fresh engine; returns the full event log."""
    if provider is None:
        provider = build_stub_provider(trace)
    engine = Engine(ruleset, seed=seed, speed=speed, provider=provider, sink=sink)
    return engine.run(trace)
