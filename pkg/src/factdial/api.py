"""HTTP facade: session creation, chat turns, health.

Error surface: unknown session is 404, anything malformed in the request
(bad JSON, missing fields, bad facts override) is 400, a decode running
past the configured wall-clock budget is 503, and everything unexpected
is an opaque 500 with the detail in the server log only.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .corpus import build_factset
from .ensemble import EnsembleBundle, SessionStore, respond

log = logging.getLogger("factdial.api")


class SessionRequest(BaseModel):
    topic_id: str | None = None


class SessionReply(BaseModel):
    session_id: str
    topic_id: str


class ChatRequest(BaseModel):
    session_id: str
    utterance: str
    debug: bool = False
    # debug-only: raw fact lines replacing the session's facts for this turn
    facts: list[str] | None = None


class CandidateInfo(BaseModel):
    text: str
    source: str
    confidence: float
    raw_score: float


class ChatReply(BaseModel):
    response: str
    source: str
    confidence: float
    candidates: list[CandidateInfo] | None = None
    attention: dict | None = None


class HealthReply(BaseModel):
    status: str
    model_version: str


class _RequestLog:
    """Append-only JSONL log, one record per handled request."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


def create_app(cfg: dict, bundle: EnsembleBundle | None = None) -> FastAPI:
    if bundle is None:
        bundle = EnsembleBundle.load(cfg)
    server_cfg = cfg["server"]

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        app.state.executor.shutdown(wait=False, cancel_futures=True)

    app = FastAPI(title="factdial", lifespan=lifespan)
    app.state.bundle = bundle
    app.state.store = SessionStore(bundle, int(server_cfg["context_window"]))
    app.state.responder = respond
    app.state.decode_timeout = float(server_cfg["decode_timeout"])
    app.state.executor = concurrent.futures.ThreadPoolExecutor(
        max_workers=8, thread_name_prefix="decode")
    app.state.request_log = (_RequestLog(server_cfg["request_log"])
                             if server_cfg.get("request_log") else None)
    app.state.debug_default = bool(server_cfg.get("debug", False))

    @app.exception_handler(RequestValidationError)
    async def malformed_request(request: Request, exc: RequestValidationError):
        detail = [{"loc": list(e.get("loc", ())), "msg": str(e.get("msg", "")),
                   "type": str(e.get("type", ""))} for e in exc.errors()]
        return JSONResponse(status_code=400, content={"detail": detail})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        log.exception("unhandled error on %s %s", request.method, request.url.path)
        return JSONResponse(status_code=500, content={"detail": "internal error"})

    @app.middleware("http")
    async def request_logging(request: Request, call_next):
        t0 = time.perf_counter()
        status = 500
        try:
            response = await call_next(request)
            status = response.status_code
            return response
        finally:
            if app.state.request_log is not None:
                app.state.request_log.write({
                    "ts": time.time(),
                    "method": request.method,
                    "path": request.url.path,
                    "status": status,
                    "elapsed_ms": round((time.perf_counter() - t0) * 1000.0, 3),
                })

    @app.get("/v1/health", response_model=HealthReply)
    def health() -> HealthReply:
        return HealthReply(status="ok", model_version=bundle.model_version)

    @app.post("/v1/sessions", response_model=SessionReply)
    def create_session(req: SessionRequest) -> SessionReply:
        try:
            session = app.state.store.create(req.topic_id)
        except KeyError as exc:
            raise HTTPException(status_code=400, detail=str(exc.args[0]))
        return SessionReply(session_id=session.session_id, topic_id=session.topic_id)

    @app.post("/v1/chat", response_model=ChatReply, response_model_exclude_none=True)
    def chat(req: ChatRequest) -> ChatReply:
        session = app.state.store.get(req.session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        debug = req.debug or app.state.debug_default

        facts_override = None
        if req.facts is not None:
            if not debug:
                raise HTTPException(status_code=400,
                                    detail="facts override requires debug=true")
            try:
                facts_override = build_factset("debug-override", req.facts,
                                               bundle.vocab)
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))

        future = app.state.executor.submit(
            app.state.responder, bundle, session, req.utterance, facts_override)
        try:
            result = future.result(timeout=app.state.decode_timeout)
        except concurrent.futures.TimeoutError:
            log.warning("decode exceeded %.1fs for session %s",
                        app.state.decode_timeout, req.session_id)
            raise HTTPException(status_code=503, detail="decode timed out")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

        reply = ChatReply(response=result.winner.surface(bundle.vocab),
                          source=result.winner.source,
                          confidence=result.winner.confidence)
        if debug:
            reply.candidates = [
                CandidateInfo(text=c.surface(bundle.vocab), source=c.source,
                              confidence=c.confidence, raw_score=c.raw_score)
                for c in result.candidates]
            reply.attention = result.attention
        return reply

    # Mounted last so /v1/* keeps priority. Serves the built web client
    # (or any static bundle) when server.static_dir points somewhere.
    static_dir = str(server_cfg.get("static_dir") or "")
    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")

    return app
