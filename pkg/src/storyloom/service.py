"""HTTP/JSON API over sessions, generation, and model metadata.

The engine and all state live server-side: the UI only posts events and
renders the returned state. Every applied event is appended to a per-
session JSON-lines log under the data directory, so a restarted service
rebuilds any session by replay. Responses are canonical JSON (sorted
keys) to make state comparisons byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .decoding import DecodeError, DecodeParams
from .discriminators import RerankWeights, load_discriminator
from .lexicon import load_taxonomy
from .lm import load_lm
from .pipeline import (
    DEFAULT_PLAN_TEMPERATURE,
    DiversitySettings,
    Engine,
    GenerationError,
    ModelChoice,
    TEMPERATURE_BOUNDS,
)
from .session import (
    Event,
    InadmissibleEvent,
    SESSION_MODES,
    Session,
    append_event,
    apply_event,
    canonical_json,
    create_session,
    log_header,
    replay_file,
)
from .text import Vocabulary, detokenize

CONFIG_ENV_PREFIX = "STORYLOOM_"


@dataclass
class ServiceConfig:
    data_dir: str
    planner_lm: str
    title_lm: str
    planwrite_lm: str
    planner_vocab: str
    writer_vocab: str
    disc_creativity: str
    disc_relevance: str
    weights: str
    taxonomy: str | None = None
    host: str = "127.0.0.1"
    port: int = 8765
    temperature_min: float = TEMPERATURE_BOUNDS[0]
    temperature_max: float = TEMPERATURE_BOUNDS[1]
    seed_mode: str = "fixed"  # fixed | random
    seed: int = 0
    event_concurrency: str = "wait"  # wait | reject
    static_dir: str | None = None

    @classmethod
    def from_file(cls, path: str | Path, env: dict | None = None) -> "ServiceConfig":
        """Read the JSON config; STORYLOOM_<KEY> environment variables win."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        env = dict(os.environ if env is None else env)
        for key in list(data):
            override = env.get(CONFIG_ENV_PREFIX + key.upper())
            if override is not None:
                data[key] = override
        for name in cls.__dataclass_fields__:
            override = env.get(CONFIG_ENV_PREFIX + name.upper())
            if override is not None:
                data[name] = override
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        config.port = int(config.port)
        config.seed = int(config.seed)
        config.temperature_min = float(config.temperature_min)
        config.temperature_max = float(config.temperature_max)
        return config

    def sessions_dir(self) -> Path:
        return Path(self.data_dir) / "sessions"


def _checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_engine(config: ServiceConfig) -> tuple[Engine, dict[str, str]]:
    """Load every checkpoint named in the config; fails fast on any of them."""
    checksums = {
        "planner_lm": _checksum(config.planner_lm),
        "title_lm": _checksum(config.title_lm),
        "planwrite_lm": _checksum(config.planwrite_lm),
        "disc_creativity": _checksum(config.disc_creativity),
        "disc_relevance": _checksum(config.disc_relevance),
    }
    engine = Engine(
        planner_lm=load_lm(config.planner_lm),
        planner_vocab=Vocabulary.load(config.planner_vocab),
        title_lm=load_lm(config.title_lm),
        planwrite_lm=load_lm(config.planwrite_lm),
        writer_vocab=Vocabulary.load(config.writer_vocab),
        discriminators=[
            load_discriminator(config.disc_creativity),
            load_discriminator(config.disc_relevance),
        ],
        weights=RerankWeights.load(config.weights),
        taxonomy=load_taxonomy(config.taxonomy) if config.taxonomy else None,
        temperature_bounds=(config.temperature_min, config.temperature_max),
    )
    return engine, checksums


class CreateSessionBody(BaseModel):
    mode: str
    model: str | None = None
    seed: int | None = None


class EventBody(BaseModel):
    kind: str
    index: int | None = None
    text: str | None = None
    choice: str | None = None
    plan_temperature: float | None = None
    story_temperature: float | None = None


class CrossBody(BaseModel):
    topic: str
    plan_temperature: float | None = None
    story_temperature: float | None = None
    seed: int | None = None


def _json(payload, status_code: int = 200) -> Response:
    return Response(
        content=canonical_json(payload), media_type="application/json", status_code=status_code
    )


def _error(status: int, message: str, rule: str | None = None, reference: str | None = None):
    body: dict = {"error": message}
    if rule is not None:
        body["rule"] = rule
    if reference is not None:
        body["reference"] = reference
    return _json(body, status_code=status)


class SessionStore:
    """In-memory sessions backed by per-session event logs on disk."""

    def __init__(self, engine: Engine, config: ServiceConfig):
        self.engine = engine
        self.config = config
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()
        config.sessions_dir().mkdir(parents=True, exist_ok=True)

    def log_path(self, session_id: str) -> Path:
        return self.config.sessions_dir() / f"{session_id}.jsonl"

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry:
            return self.locks.setdefault(session_id, threading.Lock())

    def create(self, mode: str, model: str | None, seed: int | None) -> Session:
        if seed is None:
            if self.config.seed_mode == "fixed":
                seed = self.config.seed
            else:
                seed = uuid.uuid4().int % (2**31)
        session = create_session(
            mode=mode,
            seed=seed,
            model_choice=model or ModelChoice.PLAN_AND_REVISE.value,
        )
        path = self.log_path(session.id)
        path.write_text(canonical_json(log_header(session)) + "\n", encoding="utf-8")
        with self._registry:
            self.sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._registry:
            session = self.sessions.get(session_id)
        if session is not None:
            return session
        path = self.log_path(session_id)
        if not path.exists():
            return None
        session = replay_file(path, self.engine)
        with self._registry:
            self.sessions[session_id] = session
        return session

    def apply(self, session: Session, event: Event) -> Session:
        updated = apply_event(session, event, self.engine)
        append_event(self.log_path(session.id), event)
        with self._registry:
            self.sessions[session.id] = updated
        return updated


def create_app(config: ServiceConfig, engine: Engine | None = None) -> FastAPI:
    if engine is None:
        engine, checksums = load_engine(config)
    else:
        checksums = {"inline": "n/a"}
    app = FastAPI(title="storyloom", version="0.1.0")
    store = SessionStore(engine, config)
    app.state.store = store
    app.state.checksums = checksums

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, f"schema violation: {exc.errors()[0].get('msg', 'invalid body')}")

    @app.get("/healthz")
    def healthz():
        return _json({"status": "ok", "model_checksums": checksums})

    @app.get("/api/models")
    def models():
        return _json(
            {
                "choices": [c.value for c in ModelChoice.order()],
                "default_model": ModelChoice.PLAN_AND_REVISE.value,
                "default_diversity": {
                    "plan_temperature": DEFAULT_PLAN_TEMPERATURE,
                    "story_temperature": None,
                },
                "default_beam_size": DecodeParams().beam_size,
                "temperature_bounds": list(engine.temperature_bounds),
                "modes": list(SESSION_MODES),
            }
        )

    @app.post("/api/sessions")
    def create_session_route(body: CreateSessionBody):
        if body.mode not in SESSION_MODES:
            return _error(400, f"schema violation: unknown mode {body.mode!r}")
        if body.model is not None and body.model not in {c.value for c in ModelChoice}:
            return _error(400, f"schema violation: unknown model {body.model!r}")
        session = store.create(body.mode, body.model, body.seed)
        return _json({"session_id": session.id, "state": session.to_state_dict()})

    @app.get("/api/sessions/{session_id}")
    def get_session_route(session_id: str):
        session = store.get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        return _json({"state": session.to_state_dict()})

    @app.post("/api/sessions/{session_id}/events")
    def post_event_route(session_id: str, body: EventBody):
        session = store.get(session_id)
        if session is None:
            return _error(404, f"unknown session {session_id}")
        try:
            event = Event.from_dict({k: v for k, v in body.model_dump().items() if v is not None})
        except Exception as exc:
            return _error(400, f"schema violation: {exc}")
        lock = store.lock_for(session_id)
        if store.config.event_concurrency == "reject":
            if not lock.acquire(blocking=False):
                return _error(409, "another event is in flight", rule="busy")
        else:
            lock.acquire()
        try:
            session = store.get(session_id)
            updated = store.apply(session, event)
        except InadmissibleEvent as exc:
            return _error(409, str(exc), rule=exc.rule)
        except (GenerationError, DecodeError) as exc:
            reference = uuid.uuid4().hex
            print(f"[storyloom] decode failure {reference}: {exc}")
            return _error(500, "generation failed", reference=reference)
        finally:
            lock.release()
        return _json({"state": updated.to_state_dict()})

    @app.post("/api/cross")
    def cross_route(body: CrossBody):
        topic = engine.resolve_text(body.topic)
        if not topic:
            return _error(400, "schema violation: empty topic")
        diversity = DiversitySettings(
            plan_temperature=(
                body.plan_temperature
                if body.plan_temperature is not None
                else DEFAULT_PLAN_TEMPERATURE
            ),
            story_temperature=body.story_temperature,
        )
        try:
            diversity.validate(engine.temperature_bounds)
        except ValueError as exc:
            return _error(400, f"schema violation: {exc}")
        seed = body.seed if body.seed is not None else store.config.seed
        try:
            result = engine.cross_model_generate(topic, diversity, seed=seed)
        except (GenerationError, DecodeError) as exc:
            reference = uuid.uuid4().hex
            print(f"[storyloom] decode failure {reference}: {exc}")
            return _error(500, "generation failed", reference=reference)
        return _json(
            {
                "topic": {"tokens": list(topic), "display": detokenize(topic)},
                "storyline": [
                    {"tokens": list(p), "display": detokenize(p)} for p in result.storyline
                ],
                "stories": [
                    [
                        {"tokens": list(s), "display": detokenize(s)}
                        for s in result.stories[label]
                    ]
                    for label in result.labels
                ],
                "model_labels": result.labels,
            }
        )

    if config.static_dir:
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="studio")

    return app


def run(config: ServiceConfig) -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
