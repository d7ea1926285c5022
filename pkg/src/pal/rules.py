"""Declarative IFTTT rules: trigger + conditions -> actions, with cooldowns.

A single JSON document configures a run: the rule list plus the HRV range,
signal pipeline overrides, scheduler intervals, perception settings and an
optional person gallery. `parse_rules` validates strictly (unknown fields
are rejected, with a path to the offending node) and returns an immutable
RuleSet; evaluation is a pure function of (event, state, rules, history).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

from pal import context as ctx
from pal import perception
from pal.errors import SchemaError
from pal.events import Event
from pal.signal import SignalConfig

DEFAULT_HRV_RANGE = (20.0, 100.0)
DEFAULT_AUDIO_COOLDOWN_MS = 60_000

MS_PER_DAY = 86_400_000


# ------------------------------------------------------------------ triggers

@dataclass(frozen=True)
class HrvOutOfRange:
    lo_ms: float
    hi_ms: float


@dataclass(frozen=True)
class TransitionOccurred:
    kind: str = "any"  # any | activity | location


@dataclass(frozen=True)
class FaceRecognized:
    person_id: Optional[str] = None


@dataclass(frozen=True)
class ObjectDetected:
    label: Optional[str] = None


@dataclass(frozen=True)
class TapDetected:
    pass


@dataclass(frozen=True)
class TimerElapsed:
    interval_ms: int


Trigger = Union[HrvOutOfRange, TransitionOccurred, FaceRecognized, ObjectDetected, TapDetected, TimerElapsed]


# ---------------------------------------------------------------- conditions

@dataclass(frozen=True)
class ActivityIs:
    kind: str


@dataclass(frozen=True)
class TimeOfDayIn:
    start_minute: int  # minutes from midnight, wrap-around allowed
    end_minute: int


@dataclass(frozen=True)
class SamplingModeIs:
    mode: str


Condition = Union[ActivityIs, TimeOfDayIn, SamplingModeIs]


# ------------------------------------------------------------------- actions

@dataclass(frozen=True)
class PlayAudio:
    clip_id: str


@dataclass(frozen=True)
class CaptureSnapshot:
    pass


@dataclass(frozen=True)
class SetSamplingMode:
    mode: str


@dataclass(frozen=True)
class AnnounceName:
    person_id: str


@dataclass(frozen=True)
class SpeakLabel:
    label: str


@dataclass(frozen=True)
class LogNote:
    text: str


Action = Union[PlayAudio, CaptureSnapshot, SetSamplingMode, AnnounceName, SpeakLabel, LogNote]

AUDIO_ACTIONS = (PlayAudio, AnnounceName, SpeakLabel)


@dataclass(frozen=True)
class Rule:
    id: str
    trigger: Trigger
    actions: tuple[Action, ...]
    conditions: tuple[Condition, ...] = ()
    enabled: bool = True
    cooldown_ms: int = 0


@dataclass(frozen=True)
class RuleSet:
    """A validated configuration document."""

    rules: tuple[Rule, ...] = ()
    hrv_range: tuple[float, float] = DEFAULT_HRV_RANGE
    signal: SignalConfig = field(default_factory=SignalConfig)
    scheduler: ctx.SchedulerConfig = field(default_factory=ctx.SchedulerConfig)
    perception: perception.PerceptionConfig = field(default_factory=perception.PerceptionConfig)
    gallery: tuple[perception.PersonRecord, ...] = ()


@dataclass(frozen=True)
class ActionInstance:
    rule_id: str
    action: Action
    fired_at_ms: int
    cause: Event

    def to_payload(self) -> dict:
        payload = {
            "rule_id": self.rule_id,
            "action": action_to_dict(self.action),
        }
        if self.cause.seq is not None:
            payload["cause_seq"] = self.cause.seq
        payload["cause_kind"] = self.cause.kind
        return payload


# ------------------------------------------------------------- serialization

def _require(data: dict, key: str, path: str):
    if key not in data:
        raise SchemaError(path, f"missing field {key!r}")
    return data[key]


def _reject_unknown(data: dict, allowed: set[str], path: str):
    for key in data:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown field")


def _parse_minute(value, path: str) -> int:
    if not isinstance(value, str) or ":" not in value:
        raise SchemaError(path, "expected a 'HH:MM' string")
    hh, _, mm = value.partition(":")
    try:
        hours, minutes = int(hh), int(mm)
    except ValueError as exc:
        raise SchemaError(path, "expected a 'HH:MM' string") from exc
    if not (0 <= hours < 24 and 0 <= minutes < 60):
        raise SchemaError(path, "time of day out of range")
    return hours * 60 + minutes


def _minute_str(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def trigger_from_dict(data: dict, path: str) -> Trigger:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    kind = _require(data, "type", path)
    if kind == "hrv_out_of_range":
        _reject_unknown(data, {"type", "lo_ms", "hi_ms"}, path)
        lo = float(_require(data, "lo_ms", f"{path}.lo_ms"))
        hi = float(_require(data, "hi_ms", f"{path}.hi_ms"))
        if lo >= hi:
            raise SchemaError(f"{path}.lo_ms", f"range [{lo}, {hi}] must have lo < hi")
        return HrvOutOfRange(lo, hi)
    if kind == "transition_occurred":
        _reject_unknown(data, {"type", "kind"}, path)
        which = data.get("kind", "any")
        if which not in ("any", "activity", "location"):
            raise SchemaError(f"{path}.kind", f"unknown transition kind {which!r}")
        return TransitionOccurred(which)
    if kind == "face_recognized":
        _reject_unknown(data, {"type", "person_id"}, path)
        return FaceRecognized(data.get("person_id"))
    if kind == "object_detected":
        _reject_unknown(data, {"type", "label"}, path)
        return ObjectDetected(data.get("label"))
    if kind == "tap_detected":
        _reject_unknown(data, {"type"}, path)
        return TapDetected()
    if kind == "timer_elapsed":
        _reject_unknown(data, {"type", "interval_ms"}, path)
        interval = int(_require(data, "interval_ms", f"{path}.interval_ms"))
        if interval <= 0:
            raise SchemaError(f"{path}.interval_ms", "must be positive")
        return TimerElapsed(interval)
    raise SchemaError(f"{path}.type", f"unknown trigger type {kind!r}")


def trigger_to_dict(trigger: Trigger) -> dict:
    if isinstance(trigger, HrvOutOfRange):
        return {"type": "hrv_out_of_range", "lo_ms": trigger.lo_ms, "hi_ms": trigger.hi_ms}
    if isinstance(trigger, TransitionOccurred):
        return {"type": "transition_occurred", "kind": trigger.kind}
    if isinstance(trigger, FaceRecognized):
        out = {"type": "face_recognized"}
        if trigger.person_id is not None:
            out["person_id"] = trigger.person_id
        return out
    if isinstance(trigger, ObjectDetected):
        out = {"type": "object_detected"}
        if trigger.label is not None:
            out["label"] = trigger.label
        return out
    if isinstance(trigger, TapDetected):
        return {"type": "tap_detected"}
    if isinstance(trigger, TimerElapsed):
        return {"type": "timer_elapsed", "interval_ms": trigger.interval_ms}
    raise TypeError(f"not a trigger: {trigger!r}")


def condition_from_dict(data: dict, path: str) -> Condition:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    kind = _require(data, "type", path)
    if kind == "activity_is":
        _reject_unknown(data, {"type", "kind"}, path)
        which = _require(data, "kind", f"{path}.kind")
        if which not in ctx.ACTIVITY_KINDS:
            raise SchemaError(f"{path}.kind", f"unknown activity kind {which!r}")
        return ActivityIs(which)
    if kind == "time_of_day_in":
        _reject_unknown(data, {"type", "start", "end"}, path)
        start = _parse_minute(_require(data, "start", f"{path}.start"), f"{path}.start")
        end = _parse_minute(_require(data, "end", f"{path}.end"), f"{path}.end")
        if start == end:
            raise SchemaError(path, "empty time window (start == end)")
        return TimeOfDayIn(start, end)
    if kind == "sampling_mode_is":
        _reject_unknown(data, {"type", "mode"}, path)
        mode = _require(data, "mode", f"{path}.mode")
        if mode not in ctx.SAMPLING_MODES:
            raise SchemaError(f"{path}.mode", f"unknown sampling mode {mode!r}")
        return SamplingModeIs(mode)
    raise SchemaError(f"{path}.type", f"unknown condition type {kind!r}")


def condition_to_dict(condition: Condition) -> dict:
    if isinstance(condition, ActivityIs):
        return {"type": "activity_is", "kind": condition.kind}
    if isinstance(condition, TimeOfDayIn):
        return {
            "type": "time_of_day_in",
            "start": _minute_str(condition.start_minute),
            "end": _minute_str(condition.end_minute),
        }
    if isinstance(condition, SamplingModeIs):
        return {"type": "sampling_mode_is", "mode": condition.mode}
    raise TypeError(f"not a condition: {condition!r}")


def action_from_dict(data: dict, path: str) -> Action:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    kind = _require(data, "type", path)
    if kind == "play_audio":
        _reject_unknown(data, {"type", "clip_id"}, path)
        clip = _require(data, "clip_id", f"{path}.clip_id")
        if not isinstance(clip, str) or not clip:
            raise SchemaError(f"{path}.clip_id", "must be a non-empty string")
        return PlayAudio(clip)
    if kind == "capture_snapshot":
        _reject_unknown(data, {"type"}, path)
        return CaptureSnapshot()
    if kind == "set_sampling_mode":
        _reject_unknown(data, {"type", "mode"}, path)
        mode = _require(data, "mode", f"{path}.mode")
        if mode not in ctx.SAMPLING_MODES:
            raise SchemaError(f"{path}.mode", f"unknown sampling mode {mode!r}")
        return SetSamplingMode(mode)
    if kind == "announce_name":
        _reject_unknown(data, {"type", "person_id"}, path)
        return AnnounceName(str(_require(data, "person_id", f"{path}.person_id")))
    if kind == "speak_label":
        _reject_unknown(data, {"type", "label"}, path)
        return SpeakLabel(str(_require(data, "label", f"{path}.label")))
    if kind == "log_note":
        _reject_unknown(data, {"type", "text"}, path)
        return LogNote(str(_require(data, "text", f"{path}.text")))
    raise SchemaError(f"{path}.type", f"unknown action type {kind!r}")


def action_to_dict(action: Action) -> dict:
    if isinstance(action, PlayAudio):
        return {"type": "play_audio", "clip_id": action.clip_id}
    if isinstance(action, CaptureSnapshot):
        return {"type": "capture_snapshot"}
    if isinstance(action, SetSamplingMode):
        return {"type": "set_sampling_mode", "mode": action.mode}
    if isinstance(action, AnnounceName):
        return {"type": "announce_name", "person_id": action.person_id}
    if isinstance(action, SpeakLabel):
        return {"type": "speak_label", "label": action.label}
    if isinstance(action, LogNote):
        return {"type": "log_note", "text": action.text}
    raise TypeError(f"not an action: {action!r}")


def rule_from_dict(data: dict, path: str) -> Rule:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected an object")
    _reject_unknown(
        data, {"id", "enabled", "trigger", "conditions", "actions", "cooldown_ms"}, path
    )
    rule_id = _require(data, "id", path)
    if not isinstance(rule_id, str) or not rule_id:
        raise SchemaError(f"{path}.id", "must be a non-empty string")
    trigger = trigger_from_dict(_require(data, "trigger", f"{path}.trigger"), f"{path}.trigger")
    raw_conditions = data.get("conditions", [])
    if not isinstance(raw_conditions, list):
        raise SchemaError(f"{path}.conditions", "expected a list")
    conditions = tuple(
        condition_from_dict(c, f"{path}.conditions[{i}]") for i, c in enumerate(raw_conditions)
    )
    raw_actions = _require(data, "actions", f"{path}.actions")
    if not isinstance(raw_actions, list) or not raw_actions:
        raise SchemaError(f"{path}.actions", "must be a non-empty list")
    actions = tuple(
        action_from_dict(a, f"{path}.actions[{i}]") for i, a in enumerate(raw_actions)
    )
    if "cooldown_ms" in data:
        cooldown = data["cooldown_ms"]
        if not isinstance(cooldown, int) or isinstance(cooldown, bool) or cooldown < 0:
            raise SchemaError(f"{path}.cooldown_ms", "must be a non-negative integer")
    else:
        # audio spam guard when the author does not say otherwise
        has_audio = any(isinstance(a, AUDIO_ACTIONS) for a in actions)
        cooldown = DEFAULT_AUDIO_COOLDOWN_MS if has_audio else 0
    return Rule(
        id=rule_id,
        enabled=bool(data.get("enabled", True)),
        trigger=trigger,
        conditions=conditions,
        actions=actions,
        cooldown_ms=cooldown,
    )


def rule_to_dict(rule: Rule) -> dict:
    return {
        "id": rule.id,
        "enabled": rule.enabled,
        "trigger": trigger_to_dict(rule.trigger),
        "conditions": [condition_to_dict(c) for c in rule.conditions],
        "actions": [action_to_dict(a) for a in rule.actions],
        "cooldown_ms": rule.cooldown_ms,
    }


TOP_LEVEL_FIELDS = {
    "schema_version",
    "rules",
    "hrv_range",
    "signal",
    "scheduler",
    "perception",
    "gallery",
}


def parse_rules_dict(data: dict, path: str = "$") -> RuleSet:
    if not isinstance(data, dict):
        raise SchemaError(path, "expected a configuration object")
    _reject_unknown(data, TOP_LEVEL_FIELDS, path)
    version = data.get("schema_version", 1)
    if version != 1:
        raise SchemaError(f"{path}.schema_version", f"unsupported version {version!r}")

    raw_rules = data.get("rules", [])
    if not isinstance(raw_rules, list):
        raise SchemaError(f"{path}.rules", "expected a list")
    rules = tuple(rule_from_dict(r, f"{path}.rules[{i}]") for i, r in enumerate(raw_rules))
    seen: set[str] = set()
    for i, rule in enumerate(rules):
        if rule.id in seen:
            raise SchemaError(f"{path}.rules[{i}].id", f"duplicate rule id {rule.id!r}")
        seen.add(rule.id)

    hrv_range = DEFAULT_HRV_RANGE
    if "hrv_range" in data:
        raw = data["hrv_range"]
        if not isinstance(raw, list) or len(raw) != 2:
            raise SchemaError(f"{path}.hrv_range", "expected [lo, hi]")
        lo, hi = float(raw[0]), float(raw[1])
        if lo >= hi:
            raise SchemaError(f"{path}.hrv_range", f"[{lo}, {hi}] must have lo < hi")
        hrv_range = (lo, hi)

    signal_cfg = SignalConfig.from_dict(data.get("signal", {}), f"{path}.signal")
    scheduler = ctx.SchedulerConfig.from_dict(data.get("scheduler", {}), f"{path}.scheduler")
    perception_cfg = perception.PerceptionConfig.from_dict(
        data.get("perception", {}), f"{path}.perception"
    )
    gallery = tuple(perception.parse_gallery(data.get("gallery", []), f"{path}.gallery"))

    return RuleSet(
        rules=rules,
        hrv_range=hrv_range,
        signal=signal_cfg,
        scheduler=scheduler,
        perception=perception_cfg,
        gallery=gallery,
    )


def parse_rules(text: str) -> RuleSet:
    """Parse and validate a configuration document from JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from exc
    return parse_rules_dict(data)


def ruleset_to_dict(rs: RuleSet) -> dict:
    return {
        "schema_version": 1,
        "hrv_range": [rs.hrv_range[0], rs.hrv_range[1]],
        "rules": [rule_to_dict(r) for r in rs.rules],
        "signal": rs.signal.to_dict(),
        "scheduler": rs.scheduler.to_dict(),
        "perception": rs.perception.to_dict(),
        "gallery": [p.to_dict() for p in rs.gallery],
    }


# ---------------------------------------------------------------- evaluation

def trigger_matches(trigger: Trigger, event: Event, rule_id: str) -> bool:
    if isinstance(trigger, HrvOutOfRange):
        if event.kind != "hrv_metric":
            return False
        rmssd = event.payload.get("rmssd_ms")
        return rmssd is not None and not (trigger.lo_ms <= rmssd <= trigger.hi_ms)
    if isinstance(trigger, TransitionOccurred):
        if event.kind != "transition":
            return False
        return trigger.kind == "any" or event.payload.get("kind") == trigger.kind
    if isinstance(trigger, FaceRecognized):
        if event.kind != "face" or not event.payload.get("result", {}).get("matched"):
            return False
        if trigger.person_id is None:
            return True
        return event.payload["result"].get("person_id") == trigger.person_id
    if isinstance(trigger, ObjectDetected):
        if event.kind != "detection":
            return False
        detections = event.payload.get("detections", [])
        if trigger.label is None:
            return len(detections) > 0
        return any(d.get("label") == trigger.label for d in detections)
    if isinstance(trigger, TapDetected):
        return event.kind == "tap"
    if isinstance(trigger, TimerElapsed):
        return event.kind == "rule_timer" and event.payload.get("rule_id") == rule_id
    return False


def condition_holds(condition: Condition, event: Event, state: ctx.ContextState) -> bool:
    if isinstance(condition, ActivityIs):
        return state.activity.kind == condition.kind
    if isinstance(condition, SamplingModeIs):
        return state.sampling_mode == condition.mode
    if isinstance(condition, TimeOfDayIn):
        minute = (event.t_ms % MS_PER_DAY) // 60_000
        if condition.start_minute < condition.end_minute:
            return condition.start_minute <= minute < condition.end_minute
        return minute >= condition.start_minute or minute < condition.end_minute
    return False


def evaluate(
    event: Event,
    state: ctx.ContextState,
    rules: RuleSet,
    last_fired: dict[str, int],
) -> list[ActionInstance]:
    """All action instances due for one event.

    Rules are checked in declaration order; a matching rule emits its
    actions in order. Cooldown compares the event timestamp against the
    rule's last firing; the caller records firings. This function never
    mutates its inputs.
    """
    out: list[ActionInstance] = []
    for rule in rules.rules:
        if not rule.enabled:
            continue
        if not trigger_matches(rule.trigger, event, rule.id):
            continue
        if not all(condition_holds(c, event, state) for c in rule.conditions):
            continue
        previous = last_fired.get(rule.id)
        if previous is not None and event.t_ms - previous < rule.cooldown_ms:
            continue
        for action in rule.actions:
            out.append(
                ActionInstance(rule_id=rule.id, action=action, fired_at_ms=event.t_ms, cause=event)
            )
    return out


def validate_rules(rules: RuleSet) -> list[str]:
    """Lint warnings: unreachable rules, duplicate triggers, audio spam risk."""
    warnings: list[str] = []
    gallery_ids = {p.person_id for p in rules.gallery}
    seen_triggers: dict[tuple, str] = {}
    for rule in rules.rules:
        trigger = rule.trigger
        if isinstance(trigger, FaceRecognized) and trigger.person_id is not None:
            if trigger.person_id not in gallery_ids:
                warnings.append(
                    f"rule {rule.id!r}: face_recognized person_id {trigger.person_id!r} "
                    "is not in the gallery; rule can never fire"
                )
        key = tuple(sorted(trigger_to_dict(trigger).items()))
        if key in seen_triggers:
            warnings.append(
                f"rule {rule.id!r}: duplicate trigger, same as rule {seen_triggers[key]!r}"
            )
        else:
            seen_triggers[key] = rule.id
        if rule.cooldown_ms == 0 and any(isinstance(a, AUDIO_ACTIONS) for a in rule.actions):
            warnings.append(f"rule {rule.id!r}: audio action with zero cooldown may spam")
    return warnings
