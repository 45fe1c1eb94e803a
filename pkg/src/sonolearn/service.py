"""HTTP interface for running study sessions and serving rendered audio.

Errors are returned as JSON objects {"code", "message"}: sequencing
violations map to 409, bad input to 400, missing resources to 404.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel, Field

from .bandit import SessionStateError
from .eventlog import LogFormatError
from .sessions import NotFoundError, SessionStore
from .sound import MANIFEST_NAME

ENV_PREFIX = "SONOLEARN_"


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    library_dir: Path
    host: str = "127.0.0.1"
    port: int = 8765


def load_service_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
) -> ServiceConfig:
    """Read the config file, then let SONOLEARN_* environment variables win."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        values.update(json.loads(Path(path).read_text()))
    for key in ("data_dir", "library_dir", "host", "port"):
        env_key = ENV_PREFIX + key.upper()
        if env_key in env:
            values[key] = env[env_key]
    missing = [k for k in ("data_dir", "library_dir") if k not in values]
    if missing:
        raise ValueError(f"service config missing: {missing}")
    return ServiceConfig(
        data_dir=Path(values["data_dir"]),
        library_dir=Path(values["library_dir"]),
        host=str(values.get("host", "127.0.0.1")),
        port=int(values.get("port", 8765)),
    )


class CreateSessionRequest(BaseModel):
    library: str
    condition: str = "random"
    participant: str = "participant"
    seed: int | None = None
    priors: str | dict[str, list[float]] | None = None
    hp: dict = Field(default_factory=dict)
    repeats: int = 2
    schedule: str = "uniform"
    states: list[str] | None = None
    baseline_mapping: dict[str, list[int]] | None = None


class FeedbackRequest(BaseModel):
    s_infer: str
    confidence: float
    replay_count: int = 0


def create_app(config: ServiceConfig) -> FastAPI:
    store = SessionStore(config.data_dir, config.library_dir)
    app = FastAPI(title="sonolearn session service")
    app.state.store = store

    def _error(status: int, code: str, exc: Exception) -> JSONResponse:
        return JSONResponse(status_code=status, content={"code": code, "message": str(exc)})

    @app.exception_handler(SessionStateError)
    async def _conflict(request: Request, exc: SessionStateError):
        return _error(409, "conflict", exc)

    @app.exception_handler(NotFoundError)
    async def _not_found(request: Request, exc: NotFoundError):
        return _error(404, "not_found", exc)

    @app.exception_handler(FileNotFoundError)
    async def _file_not_found(request: Request, exc: FileNotFoundError):
        return _error(400, "invalid", exc)

    @app.exception_handler(LogFormatError)
    async def _log_error(request: Request, exc: LogFormatError):
        return _error(500, "log_error", exc)

    @app.exception_handler(ValueError)
    async def _invalid(request: Request, exc: ValueError):
        return _error(400, "invalid", exc)

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest):
        payload = request.model_dump(exclude_none=True)
        session = store.create_session(payload)
        return {
            "id": session.id,
            "phase": session.phase,
            "condition": session.config.condition,
            "library": session.config.library,
            "states": list(session.config.states),
            "seed": session.config.seed,
        }

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str):
        session = store.get(session_id)
        with store.lock(session_id):
            return session.next_view()

    @app.post("/sessions/{session_id}/trials/{trial_id}/feedback")
    def submit_feedback(session_id: str, trial_id: str, feedback: FeedbackRequest):
        session = store.get(session_id)
        with store.lock(session_id):
            return session.submit(
                trial_id,
                feedback.s_infer,
                feedback.confidence,
                feedback.replay_count,
            )

    @app.get("/sessions/{session_id}/status")
    def session_status(session_id: str):
        session = store.get(session_id)
        with store.lock(session_id):
            return session.status_view()

    @app.get("/sessions/{session_id}/report")
    def session_report(session_id: str):
        session = store.get(session_id)
        with store.lock(session_id):
            return session.report()

    @app.get("/sessions/{session_id}/trials/{trial_id}/audio.wav")
    def trial_audio(session_id: str, trial_id: str):
        session = store.get(session_id)
        with store.lock(session_id):
            path = session.audio_path(trial_id)
        return FileResponse(path, media_type="audio/wav")

    @app.get("/libraries/{library}/manifest")
    def library_manifest(library: str):
        lib = store.get_library(library)
        return json.loads((lib.root / MANIFEST_NAME).read_text())

    @app.get("/libraries/{library}/audio/{file_name}")
    def library_audio(library: str, file_name: str):
        lib = store.get_library(library)
        if file_name not in lib.files:
            raise NotFoundError(f"unknown file {file_name!r} in library {library!r}")
        return FileResponse(lib.root / file_name, media_type="audio/wav")

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service until terminated (logs are flushed per request)."""
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
