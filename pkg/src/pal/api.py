"""HTTP service surface: rules/gallery configuration, history queries, a
resumable server-push event stream, replay control and live engine state.

Single-instance, single-user; engine-mutating calls are serialized through
the one run thread, reads hit immutable snapshots. The stream is
newline-delimited JSON using the same record framing as trace files.
"""

from __future__ import annotations

import threading
import uuid
from collections import deque
from pathlib import Path
from typing import Optional

import anyio
from fastapi import FastAPI, Query as QueryParam, Request
from fastapi.responses import FileResponse, JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from pal import perception
from pal import rules as rules_mod
from pal.engine import Engine, build_stub_provider
from pal.errors import Busy, NotFound, PalError, SchemaError, VersionConflict
from pal.events import Event, dumps_canonical
from pal.replay import load_trace
from pal.store import EventStore, Query

STREAM_BUFFER_MAX = 10_000
STREAM_POLL_S = 0.2


class Subscriber:
    """Bounded buffer between the engine thread and one stream consumer."""

    def __init__(self, buffer_max: int = STREAM_BUFFER_MAX):
        self.buffer: deque[Event] = deque()
        self.buffer_max = buffer_max
        self.overflowed = False
        self.cond = threading.Condition()

    def offer(self, event: Event):
        with self.cond:
            if self.overflowed:
                return
            if len(self.buffer) >= self.buffer_max:
                # drop the subscriber, never silently drop events
                self.overflowed = True
                self.buffer.clear()
            else:
                self.buffer.append(event)
            self.cond.notify()

    def poll(self, timeout_s: float) -> tuple[Optional[Event], bool]:
        """(event or None on timeout, overflowed flag)."""
        with self.cond:
            if not self.buffer and not self.overflowed:
                self.cond.wait(timeout_s)
            if self.overflowed:
                return None, True
            if self.buffer:
                return self.buffer.popleft(), False
            return None, False


class EventBus:
    def __init__(self):
        self._lock = threading.Lock()
        self._subs: list[Subscriber] = []

    def publish(self, event: Event):
        with self._lock:
            subs = list(self._subs)
        for sub in subs:
            sub.offer(event)

    def subscribe(self, buffer_max: int = STREAM_BUFFER_MAX) -> Subscriber:
        sub = Subscriber(buffer_max)
        with self._lock:
            self._subs.append(sub)
        return sub

    def unsubscribe(self, sub: Subscriber):
        with self._lock:
            if sub in self._subs:
                self._subs.remove(sub)


class RunManager:
    """At most one replay run at a time; its engine owns all writes."""

    def __init__(self, store: EventStore, bus: EventBus):
        self.store = store
        self.bus = bus
        self._lock = threading.Lock()
        self.engine: Optional[Engine] = None
        self.thread: Optional[threading.Thread] = None
        self.runs: dict[str, dict] = {}
        self.active_run_id: Optional[str] = None

    def _load_ruleset(self) -> tuple[rules_mod.RuleSet, int]:
        version, body = self.store.get_document("rules")
        ruleset = rules_mod.parse_rules_dict(body if body else {})
        gallery_version, gallery_body = self.store.get_document("gallery")
        if gallery_body:
            ruleset = rules_mod.RuleSet(
                rules=ruleset.rules,
                hrv_range=ruleset.hrv_range,
                signal=ruleset.signal,
                scheduler=ruleset.scheduler,
                perception=ruleset.perception,
                gallery=tuple(perception.parse_gallery(gallery_body)),
            )
        return ruleset, version

    def start(self, trace_ref: str, speed: str, seed: int) -> dict:
        with self._lock:
            if self.active_run_id is not None:
                raise Busy(f"run {self.active_run_id} is active")
            trace = load_trace(trace_ref)
            ruleset, rules_version = self._load_ruleset()
            run_id = uuid.uuid4().hex[:12]
            handle = {
                "run_id": run_id,
                "trace_ref": str(trace_ref),
                "rules_version": rules_version,
                "speed": speed,
                "seed": seed,
                "status": "running",
                "error": None,
            }
            self.runs[run_id] = handle
            self.active_run_id = run_id

            def sink(event: Event):
                self.store.append(event)
                self.bus.publish(event)

            engine = Engine(
                ruleset,
                seed=seed,
                speed=speed,
                provider=build_stub_provider(trace),
                sink=sink,
                first_seq=self.store.head_seq + 1,
            )
            self.engine = engine

            def target():
                try:
                    engine.run(trace)
                    handle["status"] = "cancelled" if engine.cancelled else "done"
                except Exception as exc:  # surfaced via GET /runs/{id}
                    handle["status"] = "failed"
                    handle["error"] = str(exc)
                finally:
                    with self._lock:
                        self.active_run_id = None
                        self.engine = None
                    self.store.flush()

            self.thread = threading.Thread(target=target, daemon=True)
            self.thread.start()
            return dict(handle)

    def get(self, run_id: str) -> dict:
        if run_id not in self.runs:
            raise NotFound(f"run {run_id}")
        return dict(self.runs[run_id])

    def cancel(self, run_id: str) -> dict:
        with self._lock:
            handle = self.runs.get(run_id)
            if handle is None:
                raise NotFound(f"run {run_id}")
            if self.active_run_id == run_id and self.engine is not None:
                self.engine.cancelled = True
        if self.thread is not None:
            self.thread.join(timeout=30.0)
        return dict(self.runs[run_id])

    def swap_rules(self, ruleset: rules_mod.RuleSet):
        with self._lock:
            if self.engine is not None:
                self.engine.set_rules(ruleset)

    def swap_gallery(self, gallery):
        with self._lock:
            if self.engine is not None:
                self.engine.set_gallery(list(gallery))

    def state_payload(self) -> dict:
        with self._lock:
            engine = self.engine
        if engine is None:
            return {"running": False, "state": None}
        return {"running": True, "state": engine.state.to_payload()}


def _error_response(exc: PalError) -> JSONResponse:
    status = 500
    code = type(exc).__name__
    body = {"code": code, "message": str(exc)}
    if isinstance(exc, SchemaError):
        status = 400
        body["path"] = exc.path
    elif isinstance(exc, (VersionConflict, Busy)):
        status = 409
    elif isinstance(exc, NotFound):
        status = 404
    elif isinstance(exc, PalError):
        status = 400
    return JSONResponse(status_code=status, content=body)


def create_app(store: EventStore, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="pal", docs_url=None, redoc_url=None)
    bus = EventBus()
    runs = RunManager(store, bus)
    app.state.store = store
    app.state.bus = bus
    app.state.runs = runs

    @app.exception_handler(PalError)
    async def pal_error_handler(_request: Request, exc: PalError):
        return _error_response(exc)

    # ------------------------------------------------------------- documents

    @app.get("/rules")
    def get_rules():
        version, body = store.get_document("rules")
        return {"version": version, "body": body}

    @app.put("/rules")
    async def put_rules(request: Request):
        body = await request.json()
        ruleset = rules_mod.parse_rules_dict(body)  # validate before persisting
        expected = _if_match(request)
        version = store.put_document("rules", body, expected_version=expected)
        runs.swap_rules(ruleset)
        return {"version": version}

    @app.get("/gallery")
    def get_gallery():
        version, body = store.get_document("gallery")
        return {"version": version, "body": body}

    @app.put("/gallery")
    async def put_gallery(request: Request):
        body = await request.json()
        records = perception.parse_gallery(body)
        expected = _if_match(request)
        version = store.put_document("gallery", body, expected_version=expected)
        runs.swap_gallery(records)
        return {"version": version}

    @app.post("/gallery/enroll")
    async def gallery_enroll(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "name" not in body or "embeddings" not in body:
            raise SchemaError("$", "expected {name, embeddings}")
        raw = body["embeddings"]
        if not isinstance(raw, list) or not raw:
            raise SchemaError("$.embeddings", "expected a non-empty list of vectors")
        try:
            embeddings = [perception.Embedding.normalized(vec) for vec in raw]
        except (ValueError, TypeError) as exc:
            raise SchemaError("$.embeddings", str(exc)) from exc
        _, gallery_body = store.get_document("gallery")
        existing = perception.parse_gallery(gallery_body)
        person_id = body.get("person_id")
        record = perception.enroll(
            str(body["name"]),
            embeddings,
            k_max=int(body.get("k_max", 3)),
            person_id=person_id,
            enrolled_at_ms=int(body.get("enrolled_at_ms", 0)),
        )
        if any(p.person_id == record.person_id for p in existing):
            raise SchemaError("$.name", f"person_id {record.person_id!r} already enrolled")
        new_body = list(gallery_body) + [record.to_dict()]
        version = store.put_document("gallery", new_body)
        runs.swap_gallery(perception.parse_gallery(new_body))
        return {"version": version, "record": record.to_dict()}

    @app.delete("/gallery/{person_id}")
    def gallery_delete(person_id: str):
        _, body = store.get_document("gallery")
        remaining = [r for r in body if r.get("person_id") != person_id]
        if len(remaining) == len(body):
            raise NotFound(f"person {person_id}")
        version = store.put_document("gallery", remaining)
        runs.swap_gallery(perception.parse_gallery(remaining))
        return {"version": version}

    # --------------------------------------------------------------- history

    @app.get("/events")
    def get_events(
        request: Request,
        from_ms: int = QueryParam(0, alias="from"),
        to_ms: int = QueryParam(2**62, alias="to"),
        kinds: Optional[str] = None,
        limit: Optional[int] = None,
        after: Optional[str] = None,
    ):
        kind_set = frozenset(kinds.split(",")) if kinds else None
        after_tuple = None
        if after:
            t_part, _, s_part = after.partition(":")
            after_tuple = (int(t_part), int(s_part))
        result = store.query(
            Query(from_ms, to_ms, kinds=kind_set, limit=limit, after=after_tuple)
        )
        return {
            "records": [e.to_record() for e in result.records],
            "next": None if result.next_token is None else f"{result.next_token[0]}:{result.next_token[1]}",
        }

    @app.get("/hrv")
    def get_hrv(
        from_ms: int = QueryParam(0, alias="from"),
        to_ms: int = QueryParam(2**62, alias="to"),
    ):
        result = store.query(Query(from_ms, to_ms, kinds=frozenset({"hrv_metric"})))
        return {
            "points": [
                {
                    "t_ms": e.t_ms,
                    "seq": e.seq,
                    "rmssd_ms": e.payload.get("rmssd_ms"),
                    "sdnn_ms": e.payload.get("sdnn_ms"),
                    "mean_hr_bpm": e.payload.get("mean_hr_bpm"),
                }
                for e in result.records
            ]
        }

    # ---------------------------------------------------------------- stream

    @app.get("/stream")
    async def stream(request: Request, since_seq: int = -1, kinds: Optional[str] = None):
        head = store.head_seq
        if since_seq > head:
            raise SchemaError("$.since_seq", f"beyond head {head}")
        kind_set = frozenset(kinds.split(",")) if kinds else None

        async def generate():
            sub = bus.subscribe()
            try:
                last = since_seq
                # replay history first; the subscription buffers the live tail
                while True:
                    batch = store.events_after(last, 1000)
                    if not batch:
                        break
                    for event in batch:
                        last = event.seq
                        if kind_set is None or event.kind in kind_set:
                            yield event.to_line() + "\n"
                while True:
                    event, overflow = await anyio.to_thread.run_sync(sub.poll, STREAM_POLL_S)
                    if overflow:
                        # slow consumer: drop the connection, the client
                        # resumes from its last seq; events are never skipped
                        return
                    if await request.is_disconnected():
                        return
                    if event is None:
                        continue
                    if event.seq <= last:
                        continue  # duplicate of the replayed prefix
                    if event.seq > last + 1:
                        # buffer missed events appended between replay end
                        # and subscription; re-read them from the store
                        for missed in store.events_after(last, event.seq - last - 1):
                            last = missed.seq
                            if kind_set is None or missed.kind in kind_set:
                                yield missed.to_line() + "\n"
                    last = event.seq
                    if kind_set is None or event.kind in kind_set:
                        yield event.to_line() + "\n"
            finally:
                bus.unsubscribe(sub)

        return StreamingResponse(generate(), media_type="application/x-ndjson")

    # ------------------------------------------------------------------ runs

    @app.post("/runs")
    async def post_runs(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "trace_ref" not in body:
            raise SchemaError("$", "expected {trace_ref, speed?, seed?}")
        speed = body.get("speed", "max")
        if speed not in ("realtime", "max"):
            raise SchemaError("$.speed", f"unknown speed {speed!r}")
        try:
            return runs.start(str(body["trace_ref"]), speed, int(body.get("seed", 0)))
        except FileNotFoundError as exc:
            raise NotFound(str(exc)) from exc

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        return runs.get(run_id)

    @app.delete("/runs/{run_id}")
    def delete_run(run_id: str):
        return runs.cancel(run_id)

    @app.get("/state")
    def get_state():
        return runs.state_payload()

    # -------------------------------------------------------------- frontend

    if ui_dir is not None and Path(ui_dir).is_dir():
        ui_path = Path(ui_dir)

        @app.get("/")
        def index():
            return FileResponse(ui_path / "index.html")

        app.mount("/ui", StaticFiles(directory=str(ui_path)), name="ui")

    return app


def _if_match(request: Request) -> Optional[int]:
    value = request.headers.get("if-match")
    if value is None:
        return None
    try:
        return int(value.strip('"'))
    except ValueError as exc:
        raise SchemaError("$.If-Match", "expected an integer version") from exc
