"""HTTP study service: elicitation, blinded recommendations, feedback.

A session walks through: demographics at creation, tolerance capture (1..5,
normalised to [0, 1]), ratings for one randomly drawn painting per story
group, then one recommendation set per configured engine in a randomised
order with one engine duplicated as an attention check.  The duplicate is
re-served byte-identically.  Engine identities are never exposed to the
client; only the admin export reveals them.

Persistence is an append-only JSON-lines log per session plus an index
file.  Every acknowledged write is flushed and fsynced first, so sessions
survive a process crash and can be replayed on restart.

Endpoints (all JSON; errors as ``{"error": {code, message, field?}}``):

    POST /api/session                     create, optional demographics
    GET  /api/session/{id}                state summary (supports resume)
    GET  /api/session/{id}/elicitation    paintings to rate
    POST /api/session/{id}/ratings        {"ratings": {id: 1..5}}
    POST /api/session/{id}/tolerances     {"beta_raw": 1..5, "xi_raw": 1..5}
    GET  /api/session/{id}/next           next blinded set, or {"done": true}
    POST /api/session/{id}/feedback       four 1..5 Likert values
    GET  /api/export                      admin (MOSAIC_ADMIN_TOKEN)
    GET  /api/health
"""

from __future__ import annotations

import json
import os
import random
import secrets
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from mosaic.dataset import Collection
from mosaic.engines import parse_engine_id, recommend
from mosaic.scoring import UserProfile
from mosaic.similarity import SimilarityMatrix

FEEDBACK_SCALES = ("accuracy", "diversity", "novelty", "serendipity")
ATTENTION_THRESHOLD = 2  # flag a deviation strictly greater than this

STATE_CREATED = "created"
STATE_ELICITED = "elicited"
STATE_RECOMMENDING = "recommending"
STATE_DONE = "done"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def payload(self) -> dict[str, Any]:
        error: dict[str, Any] = {"code": self.code, "message": self.message}
        if self.field is not None:
            error["field"] = self.field
        return {"error": error}


@dataclass
class ServiceConfig:
    engines: tuple[str, ...] = ("pop-a", "mosaic-a")
    r: int = 9
    raw_aggregation: bool = False
    node_budget: int = 1_000_000
    seed: int | None = None
    durable: bool = True


@dataclass
class Session:
    session_id: str
    demographics: dict[str, Any]
    elicitation_items: list[str]
    engine_order: list[str]
    state: str = STATE_CREATED
    ratings: dict[str, int] | None = None
    beta: float | None = None
    xi: float | None = None
    servings: list[dict[str, Any]] = field(default_factory=list)
    feedback: list[dict[str, int]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def pending_feedback(self) -> bool:
        return len(self.servings) > len(self.feedback)


def _likert(value: Any, name: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
        raise ApiError(400, "out_of_range", f"{name} must be an integer in 1..5", field=name)
    return value


class SessionStore:
    """All sessions, backed by an append-only on-disk log."""

    def __init__(
        self,
        data_dir: str,
        collection: Collection,
        matrices: Mapping[str, SimilarityMatrix],
        config: ServiceConfig | None = None,
    ):
        self.config = config or ServiceConfig()
        self.collection = collection
        self.matrices = dict(matrices)
        if not collection.groups:
            raise ValueError("the study flow needs at least one story group for elicitation")
        if self.config.r > len(collection):
            raise ValueError(f"r={self.config.r} exceeds the collection size {len(collection)}")
        for engine_id in self.config.engines:
            spec = parse_engine_id(engine_id)
            if spec.backbone not in self.matrices:
                raise ValueError(f"engine {engine_id} needs unregistered backbone {spec.backbone!r}")
        if len(set(self.config.engines)) != len(self.config.engines):
            raise ValueError("configured engines must be distinct")

        self.data_dir = data_dir
        self.sessions_dir = os.path.join(data_dir, "sessions")
        os.makedirs(self.sessions_dir, exist_ok=True)
        self.index_path = os.path.join(data_dir, "sessions.index")
        self._lock = threading.Lock()
        self._rng = random.Random(self.config.seed)
        self.sessions: dict[str, Session] = {}
        self._recover()

    # -- persistence ----------------------------------------------------

    def _log_path(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, f"{session_id}.log")

    def _append(self, path: str, record: dict[str, Any]) -> None:
        self._append_line(path, json.dumps(record, ensure_ascii=False))

    def _append_line(self, path: str, line: str) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            if self.config.durable:
                os.fsync(fh.fileno())

    def _recover(self) -> None:
        if not os.path.exists(self.index_path):
            return
        with open(self.index_path, "r", encoding="utf-8") as fh:
            ids = [line.strip() for line in fh if line.strip()]
        for session_id in ids:
            path = self._log_path(session_id)
            if not os.path.exists(path):
                continue  # crashed between index append and first log write
            session: Session | None = None
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    session = self._apply(session, event)
            if session is not None:
                self.sessions[session.session_id] = session

    @staticmethod
    def _apply(session: Session | None, event: dict[str, Any]) -> Session:
        kind = event["event"]
        if kind == "created":
            return Session(
                session_id=event["session_id"],
                demographics=event.get("demographics", {}),
                elicitation_items=list(event["elicitation_items"]),
                engine_order=list(event["engine_order"]),
            )
        assert session is not None
        if kind == "ratings":
            session.ratings = {k: int(v) for k, v in event["ratings"].items()}
            session.state = STATE_ELICITED
        elif kind == "tolerances":
            session.beta = float(event["beta"])
            session.xi = float(event["xi"])
        elif kind == "served":
            session.servings.append({"index": event["index"], "engine": event["engine"],
                                     "items": list(event["items"])})
            session.state = STATE_RECOMMENDING
        elif kind == "feedback":
            session.feedback.append({k: int(v) for k, v in event["values"].items()})
            if len(session.feedback) == len(session.engine_order):
                session.state = STATE_DONE
        return session

    # -- session operations ---------------------------------------------

    def _get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no such session: {session_id}")
        return session

    def create_session(self, demographics: Mapping[str, Any] | None = None) -> Session:
        if demographics is not None and not isinstance(demographics, Mapping):
            raise ApiError(400, "invalid_demographics", "demographics must be an object")
        demo = dict(demographics or {})
        if demo:
            age = demo.get("age")
            if age is not None and (not isinstance(age, int) or isinstance(age, bool)
                                    or not 0 <= age <= 130):
                raise ApiError(400, "invalid_demographics", "age must be an integer in 0..130",
                               field="age")
            gender = demo.get("gender")
            if gender is not None and (not isinstance(gender, str) or len(gender) > 64):
                raise ApiError(400, "invalid_demographics", "gender must be a short string",
                               field="gender")
            unknown = set(demo) - {"age", "gender"}
            if unknown:
                raise ApiError(400, "invalid_demographics",
                               f"unknown demographics fields: {sorted(unknown)}")

        with self._lock:
            session_id = secrets.token_hex(16)
            rng = random.Random(self._rng.getrandbits(63))
            items = self._sample_elicitation(rng)
            order = list(self.config.engines)
            rng.shuffle(order)
            duplicate = rng.choice(order)
            order.insert(rng.randrange(len(order) + 1), duplicate)
            session = Session(
                session_id=session_id,
                demographics=demo,
                elicitation_items=items,
                engine_order=order,
            )
            self._append_line(self.index_path, session_id)
            self._append_created(session)
            self.sessions[session_id] = session
            return session

    def _append_created(self, session: Session) -> None:
        self._append(
            self._log_path(session.session_id),
            {
                "event": "created",
                "session_id": session.session_id,
                "demographics": session.demographics,
                "elicitation_items": session.elicitation_items,
                "engine_order": session.engine_order,
            },
        )

    def _sample_elicitation(self, rng: random.Random) -> list[str]:
        chosen: list[str] = []
        used: set[str] = set()
        for group in self.collection.groups:
            members = sorted(group.member_ids)
            if not members:
                raise ApiError(500, "empty_group",
                               f"story group {group.group_id} has no members to elicit from")
            pick = rng.choice(members)
            attempts = 0
            while pick in used and attempts < 64:  # overlapping groups may collide
                pick = rng.choice(members)
                attempts += 1
            if pick in used:
                leftovers = [pid for pid in members if pid not in used]
                if not leftovers:
                    raise ApiError(500, "empty_group",
                                   f"story group {group.group_id} is exhausted by overlaps")
                pick = leftovers[0]
            chosen.append(pick)
            used.add(pick)
        return chosen

    def submit_ratings(self, session_id: str, ratings: Mapping[str, Any]) -> Session:
        session = self._get(session_id)
        with session.lock:
            if session.state != STATE_CREATED:
                raise ApiError(409, "wrong_state",
                               f"ratings can only be submitted once, in state 'created'"
                               f" (current: {session.state})")
            expected = set(session.elicitation_items)
            got = set(ratings)
            missing = sorted(expected - got)
            extra = sorted(got - expected)
            if missing:
                raise ApiError(400, "missing_ratings",
                               f"missing ratings for: {missing}", field="ratings")
            if extra:
                raise ApiError(400, "unexpected_ratings",
                               f"ratings for paintings outside the elicitation set: {extra}",
                               field="ratings")
            clean = {pid: _likert(value, f"ratings[{pid}]") for pid, value in ratings.items()}
            self._append(self._log_path(session_id), {"event": "ratings", "ratings": clean})
            session.ratings = clean
            session.state = STATE_ELICITED
            return session

    def submit_tolerances(self, session_id: str, beta_raw: Any, xi_raw: Any) -> Session:
        session = self._get(session_id)
        with session.lock:
            if session.state not in (STATE_CREATED, STATE_ELICITED):
                raise ApiError(409, "wrong_state",
                               f"tolerances must be submitted before recommendations start"
                               f" (current state: {session.state})")
            beta_value = _likert(beta_raw, "beta_raw")
            xi_value = _likert(xi_raw, "xi_raw")
            beta = (beta_value - 1) / 4
            xi = (xi_value - 1) / 4
            self._append(
                self._log_path(session_id),
                {"event": "tolerances", "beta_raw": beta_value, "xi_raw": xi_value,
                 "beta": beta, "xi": xi},
            )
            session.beta = beta
            session.xi = xi
            return session

    def next_recommendation(self, session_id: str) -> dict[str, Any]:
        session = self._get(session_id)
        with session.lock:
            if session.state == STATE_DONE:
                return {"done": True, "served": len(session.servings),
                        "total": len(session.engine_order)}
            if session.state == STATE_CREATED:
                raise ApiError(409, "ratings_required",
                               "submit elicitation ratings before requesting recommendations")
            if session.pending_feedback:
                raise ApiError(409, "feedback_pending",
                               "submit feedback for the current set before requesting the next")
            if session.beta is None or session.xi is None:
                raise ApiError(409, "tolerances_required",
                               "submit tolerances before requesting recommendations")

            index = len(session.servings)
            engine_id = session.engine_order[index]
            earlier = next(
                (srv for srv in session.servings if srv["engine"] == engine_id), None
            )
            if earlier is not None:
                items = list(earlier["items"])  # attention check: identical re-serve
            else:
                spec = parse_engine_id(engine_id, r=self.config.r)
                profile = UserProfile(ratings=session.ratings, beta=session.beta, xi=session.xi)
                rec = recommend(
                    spec,
                    self.collection,
                    self.matrices,
                    profile,
                    raw_aggregation=self.config.raw_aggregation,
                    node_budget=self.config.node_budget,
                )
                items = list(rec.items)
            self._append(
                self._log_path(session_id),
                {"event": "served", "index": index, "engine": engine_id, "items": items},
            )
            session.servings.append({"index": index, "engine": engine_id, "items": items})
            session.state = STATE_RECOMMENDING
            return self._serving_payload(session, index)

    def _serving_payload(self, session: Session, index: int) -> dict[str, Any]:
        serving = session.servings[index]
        return {
            "set_id": index,
            "index": index + 1,
            "total": len(session.engine_order),
            "items": [self._card(pid) for pid in serving["items"]],
        }

    def _card(self, painting_id: str) -> dict[str, str]:
        p = self.collection.painting(painting_id)
        return {
            "id": p.id, "title": p.title, "artist": p.artist, "date": p.date,
            "medium": p.medium, "dimensions": p.dimensions,
            "description": p.description, "image_ref": p.image_ref,
        }

    def submit_feedback(self, session_id: str, values: Mapping[str, Any]) -> dict[str, Any]:
        session = self._get(session_id)
        with session.lock:
            if not session.pending_feedback:
                raise ApiError(409, "nothing_pending", "no recommendation set awaits feedback")
            unknown = set(values) - set(FEEDBACK_SCALES)
            if unknown:
                raise ApiError(400, "invalid_feedback",
                               f"unknown feedback fields: {sorted(unknown)}")
            clean = {}
            for scale in FEEDBACK_SCALES:
                if scale not in values:
                    raise ApiError(400, "invalid_feedback", f"missing feedback value: {scale}",
                                   field=scale)
                clean[scale] = _likert(values[scale], scale)
            self._append(self._log_path(session_id), {"event": "feedback", "values": clean})
            session.feedback.append(clean)
            if len(session.feedback) == len(session.engine_order):
                session.state = STATE_DONE
            return {"recorded": True, "state": session.state,
                    "remaining": len(session.engine_order) - len(session.feedback)}

    # -- export ----------------------------------------------------------

    def _attention(self, session: Session) -> tuple[int | None, bool | None]:
        order = session.engine_order
        duplicate = next((e for e in order if order.count(e) == 2), None)
        if duplicate is None:
            return None, None
        first = order.index(duplicate)
        second = order.index(duplicate, first + 1)
        if len(session.feedback) <= second:
            return None, None
        a, b = session.feedback[first], session.feedback[second]
        deviation = max(abs(a[scale] - b[scale]) for scale in FEEDBACK_SCALES)
        return deviation, deviation > ATTENTION_THRESHOLD

    def export(self) -> dict[str, Any]:
        rows = []
        for session_id in sorted(self.sessions):
            session = self.sessions[session_id]
            deviation, failed = self._attention(session)
            rows.append({
                "session_id": session.session_id,
                "state": session.state,
                "demographics": session.demographics,
                "beta": session.beta,
                "xi": session.xi,
                "elicitation_items": session.elicitation_items,
                "ratings": session.ratings,
                "engine_order": session.engine_order,
                "servings": session.servings,
                "feedback": [
                    {"index": i, "engine": session.engine_order[i], **values}
                    for i, values in enumerate(session.feedback)
                ],
                "attention_deviation": deviation,
                "attention_failed": failed,
            })
        return {"n_sessions": len(rows), "sessions": rows}

    def export_study(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.export(), fh, ensure_ascii=False, indent=2)
            fh.write("\n")

    def session_summary(self, session_id: str) -> dict[str, Any]:
        session = self._get(session_id)
        with session.lock:
            payload: dict[str, Any] = {
                "session_id": session.session_id,
                "state": session.state,
                "tolerances_submitted": session.beta is not None,
                "ratings_submitted": session.ratings is not None,
                "served": len(session.servings),
                "total": len(session.engine_order),
            }
            if session.pending_feedback:
                payload["pending_set"] = self._serving_payload(session, len(session.servings) - 1)
            return payload


def create_app(store: SessionStore, images_dir: str | None = None) -> FastAPI:
    """Build the FastAPI application around a session store."""
    app = FastAPI(title="mosaic study service", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    async def _body(request: Request, allow_empty: bool = False) -> dict[str, Any]:
        raw = await request.body()
        if not raw:
            if allow_empty:
                return {}
            raise ApiError(400, "invalid_json", "request body must be a JSON object")
        try:
            payload = json.loads(raw)
        except ValueError:
            raise ApiError(400, "invalid_json", "request body must be a JSON object") from None
        if payload is None:
            return {}
        if not isinstance(payload, dict):
            raise ApiError(400, "invalid_json", "request body must be a JSON object")
        return payload

    @app.get("/api/health")
    async def health():
        return {"status": "ok", "sessions": len(store.sessions)}

    @app.post("/api/session", status_code=201)
    async def create_session(request: Request):
        payload = await _body(request, allow_empty=True)
        if "demographics" in payload:
            demographics = payload["demographics"]
        else:
            demographics = payload or None
        session = store.create_session(demographics)
        return {
            "session_id": session.session_id,
            "state": session.state,
            "n_sets": len(session.engine_order),
        }

    @app.get("/api/session/{session_id}")
    async def session_summary(session_id: str):
        return store.session_summary(session_id)

    @app.get("/api/session/{session_id}/elicitation")
    async def elicitation(session_id: str):
        session = store._get(session_id)
        return {"items": [store._card(pid) for pid in session.elicitation_items]}

    @app.post("/api/session/{session_id}/ratings")
    async def ratings(session_id: str, request: Request):
        payload = await _body(request)
        if "ratings" not in payload or not isinstance(payload["ratings"], dict):
            raise ApiError(400, "invalid_request", "body must carry a 'ratings' object",
                           field="ratings")
        session = store.submit_ratings(session_id, payload["ratings"])
        return {"state": session.state}

    @app.post("/api/session/{session_id}/tolerances")
    async def tolerances(session_id: str, request: Request):
        payload = await _body(request)
        if "beta_raw" not in payload or "xi_raw" not in payload:
            raise ApiError(400, "invalid_request", "body must carry beta_raw and xi_raw")
        session = store.submit_tolerances(session_id, payload["beta_raw"], payload["xi_raw"])
        return {"beta": session.beta, "xi": session.xi}

    @app.get("/api/session/{session_id}/next")
    async def next_set(session_id: str):
        return store.next_recommendation(session_id)

    @app.post("/api/session/{session_id}/feedback")
    async def feedback(session_id: str, request: Request):
        payload = await _body(request)
        return store.submit_feedback(session_id, payload)

    @app.get("/api/export")
    async def export(request: Request):
        expected = os.environ.get("MOSAIC_ADMIN_TOKEN")
        if not expected:
            raise ApiError(403, "admin_disabled",
                           "set MOSAIC_ADMIN_TOKEN to enable the export endpoint")
        token = request.headers.get("x-admin-token")
        if token != expected:
            raise ApiError(401, "unauthorized", "missing or wrong admin token")
        return store.export()

    if images_dir is not None:
        from starlette.staticfiles import StaticFiles

        app.mount("/img", StaticFiles(directory=images_dir), name="img")

    return app
