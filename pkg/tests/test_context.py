import math

import pytest

from pal.context import (
    ActivityState,
    ContextState,
    LocationState,
    SchedulerConfig,
    after_snapshot,
    haversine_m,
    next_snapshot_due,
    set_hrv_status,
    update_activity,
    update_location,
)
from pal.errors import InvalidCoordinates, InvalidRange, StaleEvent
from pal.signal import HrvMetrics

CFG = SchedulerConfig()


def metrics(rmssd):
    return HrvMetrics(rmssd_ms=rmssd, sdnn_ms=10.0, mean_hr_bpm=75.0, n_beats=30)


def still_state(t=0):
    return ContextState(activity=ActivityState("still", t), hrv_status="ideal")


# ---------------------------------------------------------------- activity

def test_same_activity_no_transition():
    s = still_state()
    s2, tr = update_activity(s, "still", 100)
    assert tr is None
    assert s2.activity.since_ms == 0  # unchanged kind keeps its start time


def test_activity_change_emits_transition():
    s = still_state()
    s2, tr = update_activity(s, "walking", 5000)
    assert tr is not None
    assert (tr.kind, tr.from_desc, tr.to_desc, tr.at_ms) == ("activity", "still", "walking", 5000)
    assert s2.activity.kind == "walking"
    assert s2.hrv_status == "unknown"


def test_stale_activity_event_raises():
    s = ContextState(activity=ActivityState("still", 10_000))
    with pytest.raises(StaleEvent):
        update_activity(s, "walking", 9_999)


def test_initial_activity_fix_is_a_transition():
    s = ContextState()
    s2, tr = update_activity(s, "still", 0)
    assert tr is not None and tr.from_desc == "unknown"


# ---------------------------------------------------------------- location

def fix(lat, lon, place=None, t=0):
    return LocationState(lat=lat, lon=lon, place_id=place, since_ms=t)


def test_same_place_small_move_no_transition():
    s, _ = update_location(ContextState(), fix(42.36, -71.09, "home", 0), CFG)
    # ~20 m north
    s2, tr = update_location(s, fix(42.36018, -71.09, "home", 100), CFG)
    assert tr is None


def test_place_change_transitions():
    s, _ = update_location(ContextState(), fix(42.36, -71.09, "home", 0), CFG)
    s2, tr = update_location(s, fix(42.37, -71.10, "office", 100), CFG)
    assert tr is not None
    assert (tr.from_desc, tr.to_desc) == ("home", "office")


def test_distance_rule_without_place_id():
    # oracle: spherical law of cosines for the two fixes, computed inline
    lat1, lon1 = 42.3601, -71.0942
    lat2, lon2 = 42.3601 + 150.0 / 111_194.9, -71.0942  # ~150 m north
    p1, p2 = math.radians(lat1), math.radians(lat2)
    expected = 6371000.0 * math.acos(
        min(1.0, math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(math.radians(lon2 - lon1)))
    )
    assert expected > 100.0
    assert haversine_m(lat1, lon1, lat2, lon2) == pytest.approx(expected, rel=1e-6)

    s, _ = update_location(ContextState(), fix(lat1, lon1, None, 0), CFG)
    s2, tr = update_location(s, fix(lat2, lon2, None, 100), CFG)
    assert tr is not None and tr.kind == "location"


def test_small_move_without_place_id_no_transition():
    s, _ = update_location(ContextState(), fix(42.3601, -71.0942, None, 0), CFG)
    s2, tr = update_location(s, fix(42.3601 + 50.0 / 111_194.9, -71.0942, None, 100), CFG)
    assert tr is None


def test_invalid_coordinates():
    with pytest.raises(InvalidCoordinates):
        update_location(ContextState(), fix(95.0, 0.0), CFG)


def test_first_fix_initializes_without_transition():
    s, tr = update_location(ContextState(), fix(10.0, 10.0, "home", 0), CFG)
    assert tr is None and s.location.place_id == "home"


# ---------------------------------------------------------------- scheduler

def test_snapshot_due_normal_mode():
    s = still_state()
    assert next_snapshot_due(s, 14 * 60_000, CFG) is False
    assert next_snapshot_due(s, 15 * 60_000, CFG) is True


def test_snapshot_due_frequent_mode():
    s = ContextState(
        activity=ActivityState("still", 0), sampling_mode="frequent", hrv_status="non_ideal"
    )
    assert next_snapshot_due(s, 3 * 60_000, CFG) is True
    assert next_snapshot_due(s, 3 * 60_000 - 1, CFG) is False


# ---------------------------------------------------------------- hrv status

def test_ideal_rmssd_keeps_normal_mode():
    s = set_hrv_status(still_state(), metrics(25.0), (20.0, 100.0))
    assert s.hrv_status == "ideal" and s.sampling_mode == "normal"


def test_non_ideal_rmssd_switches_to_frequent():
    s = set_hrv_status(still_state(), metrics(10.0), (20.0, 100.0))
    assert s.hrv_status == "non_ideal" and s.sampling_mode == "frequent"


def test_boundary_rmssd_is_ideal():
    s = set_hrv_status(still_state(), metrics(20.0), (20.0, 100.0))
    assert s.hrv_status == "ideal"
    s = set_hrv_status(still_state(), metrics(100.0), (20.0, 100.0))
    assert s.hrv_status == "ideal"


def test_invalid_range():
    with pytest.raises(InvalidRange):
        set_hrv_status(still_state(), metrics(50.0), (100.0, 20.0))


def test_linger_keeps_frequent_until_next_snapshot():
    s = set_hrv_status(still_state(), metrics(10.0), (20.0, 100.0))
    assert s.sampling_mode == "frequent"
    s = set_hrv_status(s, metrics(50.0), (20.0, 100.0))  # back to ideal
    assert s.sampling_mode == "frequent" and s.linger is True
    s = after_snapshot(s, 1_000_000)
    assert s.sampling_mode == "normal" and s.linger is False
    assert s.last_snapshot_ms == 1_000_000


def test_linger_disabled_reverts_immediately():
    base = ContextState(
        activity=ActivityState("still", 0), hrv_status="ideal", linger_enabled=False
    )
    s = set_hrv_status(base, metrics(10.0), (20.0, 100.0))
    s = set_hrv_status(s, metrics(50.0), (20.0, 100.0))
    assert s.sampling_mode == "normal"


def test_mode_sequence_is_deterministic_function_of_metrics():
    seq = [metrics(v) for v in (50.0, 10.0, 15.0, 50.0, 50.0, 5.0, 60.0)]

    def run():
        s = still_state()
        modes = []
        for i, m in enumerate(seq):
            s = set_hrv_status(s, m, (20.0, 100.0))
            if i == 4:
                s = after_snapshot(s, i * 1000)
            modes.append(s.sampling_mode)
        return modes

    assert run() == run()


def test_non_ideal_during_linger_cancels_revert():
    s = set_hrv_status(still_state(), metrics(10.0), (20.0, 100.0))
    s = set_hrv_status(s, metrics(50.0), (20.0, 100.0))  # linger armed
    s = set_hrv_status(s, metrics(5.0), (20.0, 100.0))  # dips again
    s = after_snapshot(s, 500)
    assert s.sampling_mode == "frequent"  # still non-ideal, no revert
