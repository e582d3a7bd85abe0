"""FastAPI application implementing the provider wire protocol.

All endpoints are POST with JSON bodies; failures return a non-200 status
with an ``{"error": ...}`` body.  Request handling is stateless over the
read-only registry, so concurrent requests are safe.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .mockmodels import ModelError, assert_simplex
from .registry import ModelRegistry


class PosteriorsRequest(BaseModel):
    model: str
    texts: list[str] = Field(min_length=1)


class MlmRequest(BaseModel):
    tokens: list[str] = Field(min_length=1)
    mask_index: int
    top_k: int = 50


class EmbedRequest(BaseModel):
    texts: list[str] = Field(min_length=1)


class PerplexityRequest(BaseModel):
    texts: list[str] = Field(min_length=1)


class TranslateRequest(BaseModel):
    text: str = Field(min_length=1)
    pivot: str = Field(min_length=1)


def create_app(registry: ModelRegistry) -> FastAPI:
    app = FastAPI(title="kallima-server", docs_url=None, redoc_url=None)

    @app.exception_handler(ModelError)
    async def model_error_handler(_: Request, exc: ModelError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"error": str(exc.errors())})

    @app.exception_handler(Exception)
    async def catchall_handler(_: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"{type(exc).__name__}: {exc}"})

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "models": registry.model_ids()}

    @app.post("/v1/posteriors")
    async def posteriors(req: PosteriorsRequest):
        model = registry.posterior(req.model)
        labels = registry.labels(req.model)
        probs = model.posteriors(req.texts)
        for vec in probs:
            assert_simplex(vec, len(labels), f"model {req.model!r}")
        return {"labels": labels, "probs": probs}

    @app.post("/v1/mlm")
    async def mlm(req: MlmRequest):
        return {"candidates": registry.mlm.candidates(req.tokens, req.mask_index, req.top_k)}

    @app.post("/v1/embed")
    async def embed(req: EmbedRequest):
        vectors = registry.embedder.embed(req.texts)
        return {"dim": registry.embedder.dim, "vectors": vectors}

    @app.post("/v1/perplexity")
    async def perplexity(req: PerplexityRequest):
        return {"ppl": registry.perplexity.perplexity(req.texts)}

    @app.post("/v1/translate")
    async def translate(req: TranslateRequest):
        return {"text": registry.translator.translate(req.text, req.pivot)}

    return app
