"""FastAPI app serving the embedding wire protocol.

POST /embed          {"texts": [...]}  -> {"vectors": [[...]], "dim": D, "model": str}
POST /embed_tokens   {"text": "..."}   -> {"tokens": [...], "vectors": [[...]]}
GET  /healthz                          -> {"status": "ready" | "loading"}

Errors are always ``{"error": str}`` with an HTTP 4xx/5xx status: 400 for
empty or oversized batches and empty text, 503 while the model is still
loading. The model loads once, in a background thread started at app
startup, so the process binds its port immediately.
"""

from __future__ import annotations

import os
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .encoders import DEFAULT_MODEL, build_encoder


@dataclass
class ServiceConfig:
    model_name: str = field(default_factory=lambda: os.environ.get("MODEL_NAME", DEFAULT_MODEL))
    port: int = field(default_factory=lambda: int(os.environ.get("PORT", "8190")))
    max_batch: int = field(default_factory=lambda: int(os.environ.get("MAX_BATCH", "64")))

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class EmbedRequest(BaseModel):
    texts: list[str]


class EmbedTokensRequest(BaseModel):
    text: str


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServiceConfig | None = None, loader=None) -> FastAPI:
    """Build the app; ``loader`` overrides encoder construction in tests."""
    config = config or ServiceConfig()
    loader = loader or (lambda: build_encoder(config.model_name))

    def _load():
        try:
            app.state.encoder = loader()
        except Exception as exc:  # noqa: BLE001 - reported via /healthz and 503s
            app.state.load_error = f"{type(exc).__name__}: {exc}"
        finally:
            app.state.ready.set()

    @asynccontextmanager
    async def _lifespan(_app: FastAPI):
        threading.Thread(target=_load, daemon=True).start()
        yield

    app = FastAPI(title="embed-service", lifespan=_lifespan)
    app.state.encoder = None
    app.state.load_error = None
    app.state.ready = threading.Event()

    @app.exception_handler(RequestValidationError)
    async def _bad_request(_request: Request, exc: RequestValidationError):
        return _error(400, f"invalid request body: {exc.errors()[0].get('msg', 'validation error')}")

    def _encoder_or_error():
        if not app.state.ready.is_set():
            return None, _error(503, "model loading")
        if app.state.encoder is None:
            return None, _error(503, f"model failed to load: {app.state.load_error}")
        return app.state.encoder, None

    @app.get("/healthz")
    def healthz():
        if not app.state.ready.is_set():
            return {"status": "loading"}
        if app.state.encoder is None:
            return {"status": "error", "error": app.state.load_error}
        return {"status": "ready", "model": app.state.encoder.name, "dim": app.state.encoder.dim}

    @app.post("/embed")
    def embed(request: EmbedRequest):
        encoder, err = _encoder_or_error()
        if err is not None:
            return err
        if not request.texts:
            return _error(400, "texts must be a nonempty list")
        if len(request.texts) > config.max_batch:
            return _error(400, f"batch of {len(request.texts)} exceeds max_batch {config.max_batch}")
        vectors = encoder.encode_sentences(request.texts)
        return {
            "vectors": vectors.tolist(),
            "dim": encoder.dim,
            "model": encoder.name,
        }

    @app.post("/embed_tokens")
    def embed_tokens(request: EmbedTokensRequest):
        encoder, err = _encoder_or_error()
        if err is not None:
            return err
        if not request.text.strip():
            return _error(400, "text must be nonempty")
        tokens, vectors = encoder.encode_tokens(request.text)
        return {"tokens": tokens, "vectors": vectors.tolist()}

    return app


def main() -> None:
    import uvicorn

    config = ServiceConfig()
    uvicorn.run(create_app(config), host="0.0.0.0", port=config.port)


if __name__ == "__main__":
    main()
