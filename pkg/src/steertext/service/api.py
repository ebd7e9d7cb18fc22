"""HTTP/JSON surface for topic prediction, steered generation, and sessions."""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import (
    ConditionBudgetError,
    EmptyPromptError,
    Engine,
    OovWordsError,
    UnknownTopicError,
)
from .sessions import SessionStore, UnknownNodeError, UnknownSessionError

TOPICS_RESPONSE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["topics"],
    "properties": {
        "topics": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "words"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "words": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["w", "cos"],
                            "properties": {
                                "w": {"type": "string"},
                                "cos": {"type": "number"},
                            },
                        },
                    },
                },
            },
        }
    },
}


class TopicsRequest(BaseModel):
    prompt: str


class GenerateRequest(BaseModel):
    prompt: str
    topic_ids: list[int] = Field(default_factory=list)
    words: list[str] = Field(default_factory=list)
    max_tokens: int | None = None
    seed: int | None = None


class SessionRequest(BaseModel):
    prompt: str


class ExpandRequest(BaseModel):
    topic_ids: list[int] = Field(default_factory=list)
    words: list[str] = Field(default_factory=list)
    max_tokens: int | None = None
    seed: int | None = None


def _error(status: int, code: str, message: str, details=None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "details": details or {}},
    )


def topics_payload(options) -> dict:
    return {
        "topics": [
            {
                "id": int(o.source_id),
                "words": [{"w": w, "cos": float(c)} for w, c in o.top_words],
            }
            for o in options
        ]
    }


def create_app(engine: Engine | None, session_store: SessionStore | None = None,
               ui_dir: Path | str | None = None) -> FastAPI:
    app = FastAPI(title="steertext", version="0.1.0")
    sessions = session_store
    if sessions is None and engine is not None:
        sessions = SessionStore(engine)

    @app.exception_handler(EmptyPromptError)
    async def _empty_prompt(request: Request, exc: EmptyPromptError):
        return _error(400, "empty_prompt", str(exc))

    @app.exception_handler(UnknownTopicError)
    async def _unknown_topic(request: Request, exc: UnknownTopicError):
        return _error(400, "unknown_topic", str(exc),
                      {"topic_id": exc.topic_id})

    @app.exception_handler(ConditionBudgetError)
    async def _budget(request: Request, exc: ConditionBudgetError):
        return _error(422, "condition_budget", str(exc),
                      {"requested": exc.requested, "budget": exc.budget})

    @app.exception_handler(OovWordsError)
    async def _oov(request: Request, exc: OovWordsError):
        return _error(422, "oov_words", str(exc), {"oov": exc.words})

    @app.exception_handler(UnknownSessionError)
    async def _no_session(request: Request, exc: UnknownSessionError):
        return _error(404, "unknown_session", f"no session {exc.args[0]!r}")

    @app.exception_handler(UnknownNodeError)
    async def _no_node(request: Request, exc: UnknownNodeError):
        return _error(404, "unknown_node", f"no node {exc.args[0]!r}")

    def _require_engine():
        if engine is None:
            return _error(503, "no_model", "no model checkpoint is loaded")
        return None

    @app.post("/v1/topics")
    async def topics(req: TopicsRequest):
        missing = _require_engine()
        if missing:
            return missing
        return topics_payload(engine.topics(req.prompt))

    @app.post("/v1/generate")
    async def generate(req: GenerateRequest):
        missing = _require_engine()
        if missing:
            return missing
        out = engine.generate(req.prompt, req.topic_ids, req.words,
                              max_tokens=req.max_tokens, seed=req.seed)
        return {"text": out["text"], "trace_id": out["trace_id"]}

    @app.post("/v1/sessions")
    async def create_session(req: SessionRequest):
        missing = _require_engine()
        if missing:
            return missing
        tree = sessions.create(req.prompt)
        return tree.to_json()

    @app.get("/v1/sessions/{session_id}")
    async def get_session(session_id: str):
        missing = _require_engine()
        if missing:
            return missing
        return sessions.get(session_id).to_json()

    @app.post("/v1/sessions/{session_id}/nodes/{node_id}/expand")
    async def expand(session_id: str, node_id: str, req: ExpandRequest):
        missing = _require_engine()
        if missing:
            return missing
        node = sessions.expand(session_id, node_id, req.topic_ids, req.words,
                               max_tokens=req.max_tokens, seed=req.seed)
        return {
            "id": node.id,
            "parent": node.parent,
            "text": node.text,
            "new_text": node.new_text,
            "chosen_topics": node.chosen_topics,
            "chosen_words": node.chosen_words,
            "options": node.options,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
