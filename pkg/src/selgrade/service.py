"""HTTP service over calibrations and grading sessions.

Every session is an append-only JSONL event log under the data directory;
the in-memory session object is always reconstructable by replaying that
log from the start, and a restarted service must answer every read
identically to the one that died. Snapshots are written periodically as a
debugging convenience and are never read back: the log is the only source
of truth. Events deliberately carry no timestamps so that replays and
reruns stay byte-stable.

Mutations append exactly one event each, except session creation, which
records the creation and the automatic grading pass as two. A per-session
lock serializes writers; creation endpoints are idempotent on identical
bodies (ids default to a content hash), so retries are safe.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .calibration import (
    AccuracyConstraints,
    CoverageReport,
    ScoredDataset,
    Thresholds,
    accuracy_curve,
    calibrate,
    scored_from_dict,
    scored_to_dict,
)
from .corpus import Corpus, Grade, Role, record_from_dict
from .embedding import (
    EmbedderConfig,
    EmbedderKind,
    EmbeddingBackendError,
    RemoteBackendConfig,
    load_head,
    score_corpus,
)
from .grader import (
    GradingSession,
    SessionStatus,
    next_deferred,
    open_session,
    session_summary,
    session_to_dict,
    submit_manual_grade,
)
from .validation import (
    Verdict,
    apply_verdict,
    build_reference,
    evaluate_spot_check,
    plan_spot_check,
    reference_from_dict,
    reference_to_dict,
    spot_check_plan_from_dict,
    spot_check_plan_to_dict,
    validate,
)

__all__ = [
    "ServiceConfig",
    "build_calibration_payload",
    "canonical_json",
    "content_id",
    "create_app",
]


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: str
    auth_token_env: str = "SELGRADE_TOKEN"
    snapshot_every: int = 20
    # built webui to serve at /ui; None runs the API alone
    ui_dir: str | None = None


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _not_found(what: str) -> ApiError:
    return ApiError(404, "not_found", what)


def _conflict(message: str) -> ApiError:
    return ApiError(409, "conflict", message)


def _invalid(message: str) -> ApiError:
    return ApiError(422, "invalid", message)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def content_id(prefix: str, obj: Any) -> str:
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return f"{prefix}{digest[:12]}"


class CanonicalJSONResponse(JSONResponse):
    """Sorted-key JSON so a reply is a pure function of its content.

    Fresh and replayed states build dicts in different insertion orders;
    canonical rendering keeps restarted services byte-compatible."""

    def render(self, content: Any) -> bytes:
        return canonical_json(content).encode("utf-8")



def _thresholds_dict(t: Thresholds) -> dict:
    return {
        "t_incorrect": t.t_incorrect,
        "t_star": t.t_star,
        "t_correct": t.t_correct,
        "normalized": t.normalized,
    }


def _coverage_dict(c: CoverageReport) -> dict:
    return {
        "n_incorrect": c.n_incorrect,
        "n_deferred": c.n_deferred,
        "n_correct": c.n_correct,
        "n_total": c.n_total,
        "f_incorrect": c.f_incorrect,
        "f_deferred": c.f_deferred,
        "f_correct": c.f_correct,
        "flags": list(c.flags),
    }


def build_calibration_payload(
    scored: ScoredDataset,
    constraints: AccuracyConstraints,
    exam_sizes: list[int],
    n_boot: int = 1000,
    seed: int = 0,
    calibration_id: str | None = None,
    curve_points: int = 50,
) -> dict:
    """Calibrate and profile a dataset into one persistable artifact.

    The default id hashes everything the artifact depends on, so identical
    inputs name the same artifact no matter which front end built it.
    curve_points sets the sampling density of the bundled accuracy/coverage
    curves; it does not feed the id because the curves are derived views.
    """
    sizes = [int(m) for m in exam_sizes]
    constraints_dict = {
        "c_min_incorrect": constraints.c_min_incorrect,
        "c_min_correct": constraints.c_min_correct,
    }
    if calibration_id is None:
        calibration_id = content_id(
            "c",
            {
                "items": [scored_to_dict(item) for item in scored.items],
                "constraints": constraints_dict,
                "exam_sizes": sizes,
                "n_boot": n_boot,
                "seed": seed,
            },
        )
    thresholds, cov = calibrate(scored, constraints)
    reference = build_reference(scored, thresholds, sizes, n_boot=n_boot, seed=seed)
    curves = {
        side.value: [point._asdict() for point in accuracy_curve(scored, side, curve_points)]
        for side in (Grade.INCORRECT, Grade.CORRECT)
    }
    return {
        "calibration_id": calibration_id,
        "thresholds": _thresholds_dict(thresholds),
        "constraints": constraints_dict,
        "coverage": _coverage_dict(cov),
        "curves": curves,
        "reference": reference_to_dict(reference),
    }


def _parse_items(raw_items: Any) -> list[dict]:
    if not isinstance(raw_items, list) or not raw_items:
        raise _invalid("items must be a non-empty list")
    for item in raw_items:
        if not isinstance(item, dict):
            raise _invalid("every item must be an object")
    return raw_items


def _embedder_from_payload(block: dict) -> tuple[EmbedderConfig, Any]:
    kind = EmbedderKind(block.get("kind", "hashed_ngram"))
    remote = None
    if "remote" in block:
        remote = RemoteBackendConfig(
            url=block["remote"]["url"],
            timeout_ms=block["remote"].get("timeout_ms", 10_000),
            batch_cap=block["remote"].get("batch_cap", 32),
            dim=block["remote"].get("dim"),
            bearer_token_env=block["remote"].get("bearer_token_env"),
        )
    config = EmbedderConfig(
        kind=kind,
        ngram_sizes=tuple(block.get("ngram_sizes", (3, 4))),
        hash_dim=block.get("hash_dim", 2**15),
        projection_dim=block.get("projection_dim", 128),
        hash_seed=block.get("hash_seed", 0),
        remote=remote,
    )
    head = load_head(block["head_path"]) if block.get("head_path") else None
    return config, head


def _scored_from_items(raw_items: list[dict], body: dict, role: str) -> ScoredDataset:
    """Pre-scored items pass through; raw ones are scored per `score_with`."""
    if all("s" in item for item in raw_items):
        return ScoredDataset(
            items=tuple(scored_from_dict(item) for item in raw_items), role=role
        )
    score_with = body.get("score_with")
    if not isinstance(score_with, dict):
        raise _invalid("items lack scores and no score_with block was given")
    config, head = _embedder_from_payload(score_with)
    records = tuple(record_from_dict(item) for item in raw_items)
    corpus = Corpus(records=records, role=Role.EXAM)
    return score_corpus(corpus, config, head, role=role)


@dataclass
class _SessionState:
    session: GradingSession
    calibration_id: str
    last_seq: int = 0
    plan: dict | None = None
    last_report: dict | None = None
    spot_check_result: dict | None = None

    def refresh_spot_check(self) -> None:
        """Derived, never logged: recompute the evaluation when complete."""
        self.spot_check_result = None
        if self.plan is None:
            return
        plan = spot_check_plan_from_dict(self.plan)
        if all(rid in self.session.manual_grades for rid in plan.all_ids()):
            self.spot_check_result = evaluate_spot_check(self.session, plan).to_dict()


class _Store:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.calibrations_dir = os.path.join(config.data_dir, "calibrations")
        self.sessions_dir = os.path.join(config.data_dir, "sessions")
        os.makedirs(self.calibrations_dir, exist_ok=True)
        os.makedirs(self.sessions_dir, exist_ok=True)
        self._global_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._states: dict[str, _SessionState] = {}
        self._calibrations: dict[str, dict] = {}

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._global_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    # calibrations

    def calibration_path(self, calibration_id: str) -> str:
        return os.path.join(self.calibrations_dir, f"{calibration_id}.json")

    def save_calibration(self, calibration_id: str, payload: dict) -> None:
        path = self.calibration_path(calibration_id)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload))
            fh.flush()
            os.fsync(fh.fileno())
        self._calibrations[calibration_id] = payload

    def load_calibration(self, calibration_id: str) -> dict:
        if calibration_id in self._calibrations:
            return self._calibrations[calibration_id]
        path = self.calibration_path(calibration_id)
        if not os.path.exists(path):
            raise _not_found(f"calibration {calibration_id} not found")
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        self._calibrations[calibration_id] = payload
        return payload

    def list_calibrations(self) -> list[str]:
        names = [
            name[: -len(".json")]
            for name in os.listdir(self.calibrations_dir)
            if name.endswith(".json")
        ]
        return sorted(names)

    # session event log

    def session_dir(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, session_id)

    def events_path(self, session_id: str) -> str:
        return os.path.join(self.session_dir(session_id), "events.jsonl")

    def session_exists(self, session_id: str) -> bool:
        return os.path.exists(self.events_path(session_id))

    def list_sessions(self) -> list[str]:
        if not os.path.isdir(self.sessions_dir):
            return []
        return sorted(
            name
            for name in os.listdir(self.sessions_dir)
            if os.path.exists(self.events_path(name))
        )

    def read_events(self, session_id: str) -> list[dict]:
        if not self.session_exists(session_id):
            raise _not_found(f"session {session_id} not found")
        events = []
        with open(self.events_path(session_id), encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    events.append(json.loads(line))
        return events

    def append_event(self, state: _SessionState, kind: str, payload: dict) -> int:
        session_id = state.session.session_id
        seq = state.last_seq + 1
        line = canonical_json({"seq": seq, "kind": kind, "payload": payload})
        with open(self.events_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        state.last_seq = seq
        if seq % self.config.snapshot_every == 0:
            self._write_snapshot(state)
        return seq

    def _write_snapshot(self, state: _SessionState) -> None:
        snapshot = {
            "last_seq": state.last_seq,
            "calibration_id": state.calibration_id,
            "session": session_to_dict(state.session),
        }
        path = os.path.join(self.session_dir(state.session.session_id), "snapshot.json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(snapshot))

    def create_session_log(self, session_id: str) -> None:
        os.makedirs(self.session_dir(session_id), exist_ok=True)

    def state(self, session_id: str) -> _SessionState:
        if session_id in self._states:
            return self._states[session_id]
        state = self._replay(session_id)
        self._states[session_id] = state
        return state

    def register(self, state: _SessionState) -> None:
        self._states[state.session.session_id] = state

    def _replay(self, session_id: str) -> _SessionState:
        state: _SessionState | None = None
        for event in self.read_events(session_id):
            kind = event["kind"]
            payload = event["payload"]
            if kind == "created":
                scored = ScoredDataset(
                    items=tuple(scored_from_dict(raw) for raw in payload["items"]),
                    role=payload["role"],
                )
                session = open_session(
                    scored,
                    Thresholds(**payload["thresholds"]),
                    AccuracyConstraints(**payload["constraints"]),
                    session_id=payload["session_id"],
                    synthetic=payload["synthetic"],
                )
                state = _SessionState(
                    session=session, calibration_id=payload["calibration_id"]
                )
            elif state is None:
                raise ApiError(500, "corrupt_log", f"first event is {kind}")
            elif kind == "auto_graded":
                pass  # informational; decisions are a pure function of created
            elif kind == "manual_grade":
                submit_manual_grade(
                    state.session,
                    payload["record_id"],
                    Grade(payload["grade"]),
                    source=payload["source"],
                )
            elif kind == "spot_check_planned":
                state.plan = payload["plan"]
                state.session.spot_check_ids = tuple(
                    payload["plan"]["incorrect"]["record_ids"]
                ) + tuple(payload["plan"]["correct"]["record_ids"])
            elif kind == "validated" or kind == "rejected":
                state.last_report = payload["report"]
                apply_verdict(state.session, Verdict(payload["report"]["verdict"]))
            else:
                raise ApiError(500, "corrupt_log", f"unknown event kind {kind}")
            state.last_seq = event["seq"]
        if state is None:
            raise _not_found(f"session {session_id} has no events")
        state.refresh_spot_check()
        return state


def _session_view(state: _SessionState) -> dict:
    session = state.session
    return {
        "session_id": session.session_id,
        "calibration_id": state.calibration_id,
        "status": session.status.value,
        "summary": session_summary(session),
        "thresholds": _thresholds_dict(session.thresholds),
        "constraints": {
            "c_min_incorrect": session.constraints.c_min_incorrect,
            "c_min_correct": session.constraints.c_min_correct,
        },
        "spot_check": {
            "plan": state.plan,
            "result": state.spot_check_result,
        },
        "validation": state.last_report,
        "last_seq": state.last_seq,
    }


def create_app(config: ServiceConfig) -> FastAPI:
    app = FastAPI(
        title="selgrade",
        docs_url=None,
        redoc_url=None,
        default_response_class=CanonicalJSONResponse,
    )
    store = _Store(config)

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return CanonicalJSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        token = os.environ.get(config.auth_token_env, "")
        # static pages stay reachable; the app itself sends the token per request
        exempt = request.url.path == "/health" or request.url.path.startswith("/ui")
        if token and not exempt:
            header = request.headers.get("authorization", "")
            if header != f"Bearer {token}":
                return CanonicalJSONResponse(
                    status_code=401,
                    content={
                        "error": {"code": "unauthorized", "message": "bad or missing token"}
                    },
                )
        return await call_next(request)

    async def _body(request: Request) -> dict:
        try:
            payload = await request.json()
        except Exception:
            raise ApiError(400, "bad_request", "request body is not valid JSON")
        if not isinstance(payload, dict):
            raise ApiError(400, "bad_request", "request body must be a JSON object")
        return payload

    def _run(fn, *args, **kwargs):
        """Translate domain and backend errors to transport codes."""
        try:
            return fn(*args, **kwargs)
        except EmbeddingBackendError as exc:
            raise ApiError(502, "bad_gateway", str(exc)) from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise _invalid(str(exc)) from exc

    @app.get("/health")
    async def health() -> dict:
        return {"status": "ok"}

    @app.post("/calibrations", status_code=201)
    async def post_calibration(request: Request) -> JSONResponse:
        body = await _body(request)
        raw_items = _parse_items(body.get("items"))
        constraints_raw = body.get("constraints")
        if not isinstance(constraints_raw, dict):
            raise _invalid("constraints object is required")
        exam_sizes = body.get("exam_sizes")
        if not isinstance(exam_sizes, list) or not exam_sizes:
            raise _invalid("exam_sizes must be a non-empty list")

        scored = _run(_scored_from_items, raw_items, body, "D")
        constraints = _run(
            lambda: AccuracyConstraints(
                c_min_incorrect=constraints_raw["c_min_incorrect"],
                c_min_correct=constraints_raw["c_min_correct"],
            )
        )
        payload = _run(
            build_calibration_payload,
            scored,
            constraints,
            exam_sizes,
            n_boot=int(body.get("n_boot", 1000)),
            seed=int(body.get("seed", 0)),
            calibration_id=body.get("calibration_id"),
        )
        calibration_id = payload["calibration_id"]
        existing_path = store.calibration_path(calibration_id)
        if os.path.exists(existing_path):
            existing = store.load_calibration(calibration_id)
            if existing != payload:
                raise _conflict(
                    f"calibration {calibration_id} exists with different content"
                )
            return CanonicalJSONResponse(status_code=200, content=existing)
        store.save_calibration(calibration_id, payload)
        return CanonicalJSONResponse(status_code=201, content=payload)

    @app.get("/calibrations")
    async def get_calibrations() -> dict:
        return {"calibrations": store.list_calibrations()}

    @app.get("/calibrations/{calibration_id}")
    async def get_calibration(calibration_id: str) -> dict:
        return store.load_calibration(calibration_id)

    @app.post("/sessions", status_code=201)
    async def post_session(request: Request) -> JSONResponse:
        body = await _body(request)
        raw_items = _parse_items(body.get("items"))
        calibration_id = body.get("calibration_id")
        if not calibration_id:
            raise _invalid("calibration_id is required")
        calibration = store.load_calibration(calibration_id)

        scored = _run(_scored_from_items, raw_items, body, "E")
        synthetic = bool(body.get("synthetic", False))
        created_payload = {
            "calibration_id": calibration_id,
            "items": [scored_to_dict(item) for item in scored.items],
            "role": scored.role,
            "thresholds": calibration["thresholds"],
            "constraints": calibration["constraints"],
            "synthetic": synthetic,
        }
        session_id = body.get("session_id") or content_id("s", created_payload)
        created_payload["session_id"] = session_id

        lock = store.lock_for(session_id)
        with lock:
            if store.session_exists(session_id):
                events = store.read_events(session_id)
                if not events or events[0]["payload"] != created_payload:
                    raise _conflict(
                        f"session {session_id} exists with different content"
                    )
                return CanonicalJSONResponse(
                    status_code=200, content=_session_view(store.state(session_id))
                )

            session = _run(
                open_session,
                scored,
                Thresholds(**calibration["thresholds"]),
                AccuracyConstraints(**calibration["constraints"]),
                session_id,
                synthetic=synthetic,
            )
            state = _SessionState(session=session, calibration_id=calibration_id)
            store.create_session_log(session_id)
            store.register(state)
            store.append_event(state, "created", created_payload)
            store.append_event(state, "auto_graded", session_summary(session))
        return CanonicalJSONResponse(status_code=201, content=_session_view(state))

    @app.get("/sessions")
    async def get_sessions() -> dict:
        views = []
        for session_id in store.list_sessions():
            state = store.state(session_id)
            summary = session_summary(state.session)
            summary["calibration_id"] = state.calibration_id
            views.append(summary)
        return {"sessions": views}

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str) -> dict:
        return _session_view(store.state(session_id))

    @app.get("/sessions/{session_id}/queue")
    async def get_queue(session_id: str, k: int | None = None) -> dict:
        if k is not None and k < 1:
            raise _invalid("k must be positive")
        state = store.state(session_id)
        session = state.session
        pending = next_deferred(session, k if k is not None else max(1, len(session.queue)))
        entries = []
        for rid in pending:
            item = session.record(rid)
            entries.append(
                {
                    "record_id": rid,
                    "s": item.s,
                    "question": item.record.question,
                    "correct_answer": item.record.correct_answer,
                    "given_answer": item.record.given_answer,
                }
            )
        return {
            "session_id": session_id,
            "queue": entries,
            "remaining": len(
                [r for r in session.queue if r not in session.manual_grades]
            ),
        }

    def _grade_payload(body: dict) -> tuple[str, Grade]:
        record_id = body.get("record_id")
        if not isinstance(record_id, str) or not record_id:
            raise _invalid("record_id is required")
        grade_raw = body.get("grade")
        if not isinstance(grade_raw, str):
            raise _invalid("grade is required")
        try:
            grade = Grade(grade_raw.casefold())
        except ValueError:
            raise _invalid(f"unknown grade {grade_raw!r}")
        return record_id, grade

    @app.post("/sessions/{session_id}/grades")
    async def post_grade(session_id: str, request: Request) -> dict:
        body = await _body(request)
        record_id, grade = _grade_payload(body)
        source = body.get("source", "manual")
        with store.lock_for(session_id):
            state = store.state(session_id)
            session = state.session
            if session.status in (SessionStatus.VALIDATED, SessionStatus.REJECTED):
                raise _conflict(f"session is {session.status.value}")
            if record_id not in session.gradable_ids():
                raise _conflict(
                    f"record {record_id} is not deferred or spot-checked here"
                )
            submit_manual_grade(session, record_id, grade, source=source)
            seq = store.append_event(
                state,
                "manual_grade",
                {"record_id": record_id, "grade": grade.value, "source": source},
            )
            state.refresh_spot_check()
            return {
                "session_id": session_id,
                "status": session.status.value,
                "manual_remaining": len(
                    [r for r in session.queue if r not in session.manual_grades]
                ),
                "seq": seq,
            }

    @app.post("/sessions/{session_id}/validate")
    async def post_validate(session_id: str, request: Request) -> dict:
        body = await _body(request)
        margin = float(body.get("margin", 0.0))
        n_min = int(body.get("n_min", 5))
        with store.lock_for(session_id):
            state = store.state(session_id)
            session = state.session
            if session.status is SessionStatus.OPEN:
                raise _conflict("session still has ungraded deferred records")
            if session.status in (SessionStatus.VALIDATED, SessionStatus.REJECTED):
                raise _conflict(f"session is already {session.status.value}")
            calibration = store.load_calibration(state.calibration_id)
            reference = reference_from_dict(calibration["reference"])
            report = _run(validate, session, reference, margin=margin, n_min=n_min)
            apply_verdict(session, report.verdict)
            kind = "rejected" if report.verdict is Verdict.REJECT else "validated"
            seq = store.append_event(state, kind, {"report": report.to_dict()})
            state.last_report = report.to_dict()
            return {
                "session_id": session_id,
                "status": session.status.value,
                "report": report.to_dict(),
                "seq": seq,
            }

    @app.post("/sessions/{session_id}/spot-check")
    async def post_spot_check(session_id: str, request: Request) -> dict:
        body = await _body(request)
        confidence = body.get("confidence")
        if not isinstance(confidence, (int, float)):
            raise _invalid("confidence is required")
        seed = int(body.get("seed", 0))
        with store.lock_for(session_id):
            state = store.state(session_id)
            session = state.session
            if session.status not in (
                SessionStatus.AWAITING_VALIDATION,
                SessionStatus.VALIDATED,
            ):
                raise _conflict(f"session is {session.status.value}")
            if state.plan is not None:
                raise _conflict("spot check already planned")
            plan = _run(plan_spot_check, session, float(confidence), seed)
            plan_dict = spot_check_plan_to_dict(plan)
            state.plan = plan_dict
            seq = store.append_event(state, "spot_check_planned", {"plan": plan_dict})
            state.refresh_spot_check()
            return {"session_id": session_id, "plan": plan_dict, "seq": seq}

    @app.post("/sessions/{session_id}/spot-check/grades")
    async def post_spot_check_grade(session_id: str, request: Request) -> dict:
        body = await _body(request)
        record_id, grade = _grade_payload(body)
        with store.lock_for(session_id):
            state = store.state(session_id)
            session = state.session
            if state.plan is None:
                raise _conflict("no spot check planned")
            if record_id not in session.spot_check_ids:
                raise _conflict(f"record {record_id} is not in the spot check plan")
            submit_manual_grade(session, record_id, grade, source="spot_check")
            seq = store.append_event(
                state,
                "manual_grade",
                {"record_id": record_id, "grade": grade.value, "source": "spot_check"},
            )
            state.refresh_spot_check()
            return {
                "session_id": session_id,
                "seq": seq,
                "result": state.spot_check_result,
            }

    if config.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app
