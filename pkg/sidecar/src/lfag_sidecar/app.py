"""FastAPI application implementing the provider wire protocol:
POST /embed, POST /ner, POST /generate, GET /health.

Every error body has the shape {"error": code, "message": text}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .backends import (
    LockedBackend,
    ModelLoadError,
    load_embedding_backend,
    load_generation_backend,
    load_ner_backend,
)
from .config import GENERATION_DISABLED, SidecarConfig


class EmbedRequest(BaseModel):
    texts: list[str] = Field(min_length=1)


class NerRequest(BaseModel):
    text: str = Field(min_length=1)
    model: str = Field(min_length=1)


class GenerateRequest(BaseModel):
    prompt: str = Field(min_length=1)
    max_tokens: int | None = None
    temperature: float | None = None
    seed: int | None = None


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    app = FastAPI(title="lfag-sidecar", docs_url=None, redoc_url=None)

    embedder = LockedBackend(load_embedding_backend(config.embedding_model)) if config.embedding_model else None
    ner_backends = {name: LockedBackend(load_ner_backend(name)) for name in config.ner_models}
    generator = None
    if config.generation_backend != GENERATION_DISABLED:
        generator = LockedBackend(load_generation_backend(config.generation_backend))

    @app.exception_handler(ApiError)
    async def api_error_handler(_: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"error": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": "E_SCHEMA", "message": str(exc.errors()[:1])})

    @app.exception_handler(Exception)
    async def fallback_handler(_: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": "E_INTERNAL", "message": str(exc)})

    def check_auth(request: Request) -> None:
        if config.bearer_token is None:
            return
        header = request.headers.get("Authorization", "")
        if header != f"Bearer {config.bearer_token}":
            raise ApiError(401, "E_AUTH", "missing or invalid bearer token")

    @app.get("/health")
    async def health(request: Request):
        check_auth(request)
        return {"status": "ok", "models": config.enabled_models()}

    @app.post("/embed")
    async def embed(request: Request, body: EmbedRequest):
        check_auth(request)
        if embedder is None:
            raise ApiError(503, "E_DISABLED", "embedding capability is not enabled")
        if len(body.texts) > config.max_batch_size:
            raise ApiError(400, "E_BATCH", f"batch of {len(body.texts)} exceeds {config.max_batch_size}")
        if any(not t for t in body.texts):
            raise ApiError(400, "E_EMPTY_TEXT", "texts must be non-empty strings")
        vectors = embedder.embed(body.texts)
        return {"vectors": vectors, "dim": len(vectors[0]) if vectors else 0}

    @app.post("/ner")
    async def ner(request: Request, body: NerRequest):
        check_auth(request)
        backend = ner_backends.get(body.model)
        if backend is None:
            raise ApiError(404, "E_MODEL", f"unknown NER model {body.model!r}")
        return {"entities": backend.extract(body.text)}

    @app.post("/generate")
    async def generate(request: Request, body: GenerateRequest):
        check_auth(request)
        if generator is None:
            raise ApiError(503, "E_DISABLED", "generation capability is not enabled")
        text = generator.generate(
            body.prompt, max_tokens=body.max_tokens, temperature=body.temperature, seed=body.seed
        )
        return {"text": text}

    return app


__all__ = ["create_app", "ApiError", "ModelLoadError"]
