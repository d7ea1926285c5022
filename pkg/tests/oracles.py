"""Independent reference implementations used as test oracles.

These deliberately work on plain dicts (the JSON document and raw event
records) and share no code with the package under test.
"""

from __future__ import annotations

MS_PER_DAY = 86_400_000


def brute_force_evaluate(event: dict, state: dict, rules_doc: dict, last_fired: dict) -> list:
    """Naive rule evaluation over raw dicts; returns (rule_id, action) pairs."""
    out = []
    for rd in rules_doc.get("rules", []):
        if not rd.get("enabled", True):
            continue
        if not _trigger_matches(rd["trigger"], rd["id"], event):
            continue
        if not all(_condition_holds(c, event, state) for c in rd.get("conditions", [])):
            continue
        cooldown = rd.get("cooldown_ms", 0)
        prev = last_fired.get(rd["id"])
        if prev is not None and event["t_ms"] - prev < cooldown:
            continue
        for action in rd["actions"]:
            out.append((rd["id"], action, event["t_ms"]))
    return out


def _trigger_matches(trigger: dict, rule_id: str, event: dict) -> bool:
    t = trigger["type"]
    kind = event["kind"]
    payload = event.get("payload", {})
    if t == "hrv_out_of_range":
        if kind != "hrv_metric":
            return False
        rmssd = payload.get("rmssd_ms")
        if rmssd is None:
            return False
        return rmssd < trigger["lo_ms"] or rmssd > trigger["hi_ms"]
    if t == "transition_occurred":
        if kind != "transition":
            return False
        want = trigger.get("kind", "any")
        return want == "any" or payload.get("kind") == want
    if t == "face_recognized":
        if kind != "face":
            return False
        result = payload.get("result", {})
        if not result.get("matched"):
            return False
        want = trigger.get("person_id")
        return want is None or result.get("person_id") == want
    if t == "object_detected":
        if kind != "detection":
            return False
        detections = payload.get("detections", [])
        want = trigger.get("label")
        if want is None:
            return len(detections) > 0
        return any(d.get("label") == want for d in detections)
    if t == "tap_detected":
        return kind == "tap"
    if t == "timer_elapsed":
        return kind == "rule_timer" and payload.get("rule_id") == rule_id
    return False


def _condition_holds(condition: dict, event: dict, state: dict) -> bool:
    t = condition["type"]
    if t == "activity_is":
        return state.get("activity") == condition["kind"]
    if t == "sampling_mode_is":
        return state.get("sampling_mode") == condition["mode"]
    if t == "time_of_day_in":
        minute = (event["t_ms"] % MS_PER_DAY) // 60_000
        start = _minutes(condition["start"])
        end = _minutes(condition["end"])
        if start < end:
            return start <= minute < end
        return minute >= start or minute < end
    return False


def _minutes(hhmm: str) -> int:
    hh, _, mm = hhmm.partition(":")
    return int(hh) * 60 + int(mm)


def random_rules_doc(rng, n_rules: int, person_ids=("alice", "bob")) -> dict:
    """A random but schema-valid configuration document."""
    rules = []
    for i in range(n_rules):
        trigger_kind = rng.choice(
            [
                "hrv_out_of_range",
                "transition_occurred",
                "face_recognized",
                "object_detected",
                "tap_detected",
                "timer_elapsed",
            ]
        )
        if trigger_kind == "hrv_out_of_range":
            lo = float(rng.integers(10, 60))
            trigger = {"type": trigger_kind, "lo_ms": lo, "hi_ms": lo + float(rng.integers(10, 80))}
        elif trigger_kind == "transition_occurred":
            trigger = {"type": trigger_kind, "kind": str(rng.choice(["any", "activity", "location"]))}
        elif trigger_kind == "face_recognized":
            trigger = {"type": trigger_kind}
            if rng.random() < 0.7:
                trigger["person_id"] = str(rng.choice(list(person_ids)))
        elif trigger_kind == "object_detected":
            trigger = {"type": trigger_kind}
            if rng.random() < 0.7:
                trigger["label"] = str(rng.choice(["cup", "laptop", "book"]))
        elif trigger_kind == "timer_elapsed":
            trigger = {"type": trigger_kind, "interval_ms": int(rng.integers(1, 10)) * 60_000}
        else:
            trigger = {"type": trigger_kind}

        conditions = []
        if rng.random() < 0.5:
            conditions.append(
                {"type": "activity_is", "kind": str(rng.choice(["still", "walking", "running"]))}
            )
        if rng.random() < 0.3:
            conditions.append(
                {"type": "sampling_mode_is", "mode": str(rng.choice(["normal", "frequent"]))}
            )
        if rng.random() < 0.3:
            a, b = sorted(rng.integers(0, 24 * 60, size=2).tolist())
            if a == b:
                b = (a + 60) % (24 * 60)
            start, end = (a, b) if rng.random() < 0.5 else (b, a)  # wrap-around sometimes
            conditions.append(
                {
                    "type": "time_of_day_in",
                    "start": f"{start // 60:02d}:{start % 60:02d}",
                    "end": f"{end // 60:02d}:{end % 60:02d}",
                }
            )

        actions = []
        for _ in range(int(rng.integers(1, 4))):
            action_kind = rng.choice(
                ["play_audio", "capture_snapshot", "set_sampling_mode", "log_note", "speak_label"]
            )
            if action_kind == "play_audio":
                actions.append({"type": "play_audio", "clip_id": f"clip{int(rng.integers(0, 5))}"})
            elif action_kind == "set_sampling_mode":
                actions.append(
                    {"type": "set_sampling_mode", "mode": str(rng.choice(["normal", "frequent"]))}
                )
            elif action_kind == "log_note":
                actions.append({"type": "log_note", "text": f"note{int(rng.integers(0, 5))}"})
            elif action_kind == "speak_label":
                actions.append({"type": "speak_label", "label": f"label{int(rng.integers(0, 5))}"})
            else:
                actions.append({"type": "capture_snapshot"})

        rules.append(
            {
                "id": f"rule{i:02d}",
                "enabled": bool(rng.random() < 0.9),
                "trigger": trigger,
                "conditions": conditions,
                "actions": actions,
                "cooldown_ms": int(rng.choice([0, 1000, 60_000, 300_000])),
            }
        )
    return {"schema_version": 1, "rules": rules}


def random_event_stream(rng, n_events: int, rule_ids) -> list:
    """Random (event, state) pairs with non-decreasing timestamps."""
    stream = []
    t = 0
    for _ in range(n_events):
        t += int(rng.integers(0, 30_000))
        kind = str(
            rng.choice(
                ["hrv_metric", "transition", "face", "detection", "tap", "rule_timer", "note"]
            )
        )
        if kind == "hrv_metric":
            payload = {"rmssd_ms": float(rng.uniform(5.0, 150.0))}
        elif kind == "transition":
            payload = {"kind": str(rng.choice(["activity", "location"])), "from": "a", "to": "b"}
        elif kind == "face":
            if rng.random() < 0.7:
                payload = {
                    "result": {
                        "matched": True,
                        "person_id": str(rng.choice(["alice", "bob", "carol"])),
                        "distance": 0.3,
                    }
                }
            else:
                payload = {"result": {"matched": False, "nearest_distance": 1.4}}
        elif kind == "detection":
            labels = rng.choice(["cup", "laptop", "book", "dog"], size=int(rng.integers(0, 3)))
            payload = {"detections": [{"label": str(l), "confidence": 1.0} for l in labels]}
        elif kind == "rule_timer":
            if len(rule_ids) == 0:
                continue
            payload = {"rule_id": str(rng.choice(list(rule_ids)))}
        else:
            payload = {}
        state = {
            "activity": str(rng.choice(["still", "walking", "running", "unknown"])),
            "sampling_mode": str(rng.choice(["normal", "frequent"])),
        }
        stream.append(({"t_ms": t, "kind": kind, "payload": payload}, state))
    return stream
