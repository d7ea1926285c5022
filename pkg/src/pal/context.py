"""Context tracking: current activity, location, HRV status and the adaptive
snapshot scheduler mode.

State updates are pure functions returning new frozen states, so the engine
can replay identical event sequences into identical state sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from pal.errors import InvalidCoordinates, InvalidRange, SchemaError, StaleEvent
from pal.signal import HrvMetrics

ACTIVITY_KINDS = ("still", "walking", "running", "in_vehicle", "unknown")
SAMPLING_MODES = ("normal", "frequent")
HRV_STATUSES = ("ideal", "non_ideal", "unknown")

EARTH_RADIUS_M = 6371000.0


@dataclass(frozen=True)
class SchedulerConfig:
    """Snapshot cadence: 15 min normally, 3 min while HRV is non-ideal."""

    normal_interval_ms: int = 900_000
    frequent_interval_ms: int = 180_000
    linger: bool = True
    location_threshold_m: float = 100.0

    def __post_init__(self):
        if self.normal_interval_ms <= 0 or self.frequent_interval_ms <= 0:
            raise ValueError("intervals must be positive")
        if self.location_threshold_m <= 0:
            raise ValueError("location_threshold_m must be positive")

    def interval_ms(self, mode: str) -> int:
        return self.frequent_interval_ms if mode == "frequent" else self.normal_interval_ms

    @classmethod
    def from_dict(cls, data: dict, path: str = "scheduler") -> "SchedulerConfig":
        if not isinstance(data, dict):
            raise SchemaError(path, "expected an object")
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise SchemaError(f"{path}.{key}", "unknown field")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise SchemaError(path, str(exc)) from exc

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class ActivityState:
    kind: str = "unknown"
    since_ms: int = 0


@dataclass(frozen=True)
class LocationState:
    lat: float
    lon: float
    place_id: Optional[str] = None
    place_type: Optional[str] = None
    since_ms: int = 0


@dataclass(frozen=True)
class Transition:
    kind: str  # "activity" | "location"
    from_desc: str
    to_desc: str
    at_ms: int

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "from": self.from_desc,
            "to": self.to_desc,
        }


@dataclass(frozen=True)
class ContextState:
    activity: ActivityState = ActivityState()
    location: Optional[LocationState] = None
    sampling_mode: str = "normal"
    last_snapshot_ms: int = 0
    hrv_status: str = "unknown"
    linger: bool = False
    linger_enabled: bool = True

    def to_payload(self) -> dict:
        return {
            "activity": self.activity.kind,
            "activity_since_ms": self.activity.since_ms,
            "location": None
            if self.location is None
            else {
                "lat": self.location.lat,
                "lon": self.location.lon,
                "place_id": self.location.place_id,
                "place_type": self.location.place_type,
            },
            "sampling_mode": self.sampling_mode,
            "last_snapshot_ms": self.last_snapshot_ms,
            "hrv_status": self.hrv_status,
        }


def _check_not_stale(state: ContextState, t_ms: int):
    newest = state.activity.since_ms
    if state.location is not None:
        newest = max(newest, state.location.since_ms)
    if t_ms < newest:
        raise StaleEvent(f"event at {t_ms} ms is older than state at {newest} ms")


def _leave_non_ideal(state: ContextState, new_status: str) -> ContextState:
    """Mode bookkeeping when HRV status is ideal or unknown.

    Frequent mode persists for one more snapshot when linger is enabled,
    otherwise reverts immediately; see `after_snapshot`.
    """
    if state.sampling_mode == "frequent":
        if state.linger_enabled:
            return replace(state, hrv_status=new_status, linger=True)
        return replace(state, hrv_status=new_status, sampling_mode="normal", linger=False)
    return replace(state, hrv_status=new_status, linger=False)


def update_activity(state: ContextState, kind: str, t_ms: int) -> tuple[ContextState, Optional[Transition]]:
    """Apply an activity sample; a kind change yields a Transition.

    Leaving "still" marks HRV status unknown since windows are no longer
    evaluated.
    """
    if kind not in ACTIVITY_KINDS:
        raise ValueError(f"unknown activity kind {kind!r}")
    _check_not_stale(state, t_ms)
    old_kind = state.activity.kind
    if kind == old_kind:
        return state, None
    new_state = replace(state, activity=ActivityState(kind=kind, since_ms=t_ms))
    if kind != "still":
        new_state = _leave_non_ideal(new_state, "unknown")
    transition = Transition("activity", old_kind, kind, t_ms)
    return new_state, transition


def location_desc(loc: LocationState) -> str:
    if loc.place_id is not None:
        return loc.place_id
    return f"{loc.lat:.5f},{loc.lon:.5f}"


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def update_location(
    state: ContextState, fix: LocationState, cfg: SchedulerConfig
) -> tuple[ContextState, Optional[Transition]]:
    """Apply a location fix.

    A transition fires when the place identifier changes, or, when either
    fix lacks one, when the fix moved more than `location_threshold_m` from
    the previous position. The first fix initializes without a transition.
    """
    if not (-90.0 <= fix.lat <= 90.0) or not (-180.0 <= fix.lon <= 180.0):
        raise InvalidCoordinates(f"({fix.lat}, {fix.lon}) out of range")
    _check_not_stale(state, fix.since_ms)
    previous = state.location
    new_state = replace(state, location=fix)
    if previous is None:
        return new_state, None
    if previous.place_id is not None and fix.place_id is not None:
        moved = previous.place_id != fix.place_id
    else:
        distance = haversine_m(previous.lat, previous.lon, fix.lat, fix.lon)
        moved = distance > cfg.location_threshold_m
    if not moved:
        return new_state, None
    return new_state, Transition("location", location_desc(previous), location_desc(fix), fix.since_ms)


def next_snapshot_due(state: ContextState, now_ms: int, cfg: SchedulerConfig) -> bool:
    """True when the capture interval for the current mode has elapsed."""
    return now_ms - state.last_snapshot_ms >= cfg.interval_ms(state.sampling_mode)


def set_hrv_status(
    state: ContextState, metrics: HrvMetrics, hrv_range: tuple[float, float]
) -> ContextState:
    """Classify RMSSD against the configured range and update the mode.

    The range is a closed interval; boundary values count as ideal.
    """
    lo, hi = hrv_range
    if lo >= hi:
        raise InvalidRange(f"hrv_range [{lo}, {hi}] must have lo < hi")
    if lo <= metrics.rmssd_ms <= hi:
        return _leave_non_ideal(state, "ideal")
    return replace(state, hrv_status="non_ideal", sampling_mode="frequent", linger=False)


def after_snapshot(state: ContextState, t_ms: int) -> ContextState:
    """Record a snapshot: resets the capture timer and settles any linger."""
    state = replace(state, last_snapshot_ms=t_ms)
    if state.linger and state.hrv_status != "non_ideal":
        state = replace(state, sampling_mode="normal", linger=False)
    return state


def set_sampling_mode(state: ContextState, mode: str) -> ContextState:
    if mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    return replace(state, sampling_mode=mode)
