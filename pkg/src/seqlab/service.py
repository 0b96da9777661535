"""HTTP API over loaded checkpoints: tagging, classification, health.

Models load once at startup into immutable shared state; handlers never
mutate them, so concurrent requests are safe.  Every error leaves through
the same envelope: ``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .infer import LoadedModel, load_model, predict_for_text

MAX_TEXT_BYTES = 64 * 1024


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def create_app(
    models: dict[str, str | Path | LoadedModel],
    allow_origin: str = "*",
    demo_dir: str | Path | None = None,
) -> FastAPI:
    """Build the API with the named models fully loaded before serving."""
    loaded: dict[str, LoadedModel] = {}
    for name, source in models.items():
        loaded[name] = source if isinstance(source, LoadedModel) else load_model(source)

    app = FastAPI(title="seqlab", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[allow_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(RequestValidationError)
    async def on_validation(request: Request, exc: RequestValidationError):
        return _error(422, "invalid_request", "body must be JSON with a 'text' field")

    @app.exception_handler(Exception)
    async def on_error(request: Request, exc: Exception):
        return _error(500, "internal_error", str(exc))

    def check_request(name: str, payload, expected_kind: str):
        model = loaded.get(name)
        if model is None:
            return None, _error(404, "unknown_model", f"no model named {name!r}")
        if not isinstance(payload, dict) or not isinstance(payload.get("text"), str):
            return None, _error(422, "invalid_request", "body must be JSON with a 'text' field")
        text = payload["text"]
        if len(text.encode("utf-8")) > MAX_TEXT_BYTES:
            return None, _error(413, "text_too_large", f"text exceeds {MAX_TEXT_BYTES} bytes")
        if not text.strip():
            return None, _error(422, "empty_text", "text must contain at least one token")
        if model.kind != expected_kind:
            return None, _error(
                409,
                "kind_mismatch",
                f"model {name!r} is a {model.kind}, endpoint needs a {expected_kind}",
            )
        return model, None

    @app.post("/api/v1/tag/{name}")
    async def tag(name: str, request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(422, "invalid_request", "body must be valid JSON")
        model, err = check_request(name, payload, "tagger")
        if err is not None:
            return err
        result = predict_for_text(model, payload["text"])
        return {
            "model": name,
            "tokens": result.tokens,
            "labels": result.labels,
            "spans": [
                {
                    "type": s.type,
                    "start": s.start,
                    "end": s.end,
                    "charStart": s.char_start,
                    "charEnd": s.char_end,
                }
                for s in result.spans
            ],
        }

    @app.post("/api/v1/classify/{name}")
    async def classify(name: str, request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(422, "invalid_request", "body must be valid JSON")
        model, err = check_request(name, payload, "classifier")
        if err is not None:
            return err
        result = predict_for_text(model, payload["text"])
        return {"model": name, "label": result.label, "scores": result.scores}

    @app.get("/api/v1/health")
    async def health():
        return {
            "status": "ok",
            "models": {name: model.kind for name, model in sorted(loaded.items())},
        }

    if demo_dir is not None and Path(demo_dir).is_dir():
        app.mount("/demo", StaticFiles(directory=str(demo_dir), html=True), name="demo")

    return app
