"""PAL: a trace-driven, context-aware intervention engine.

Converts multi-modal sensor streams (PPG, IMU, location, activity, tap,
image annotations) into HRV metrics, context transitions and rule-triggered
interventions, with append-only persistence, a live-configuration service
API and a deterministic replay/evaluation harness.
"""

__version__ = "0.1.0"
