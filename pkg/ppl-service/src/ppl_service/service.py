"""HTTP surface: one text, a batch of texts, and a health probe.

Error responses always carry {code, message}.  The model is loaded once
at application construction and shared read-only across requests; a
failed load leaves the service answering 503 rather than crashing.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .lm import (
    DEFAULT_MODEL_ID,
    ContextExceededError,
    EmptyTextError,
    LanguageModel,
    load_default,
)

logger = logging.getLogger(__name__)


class PerplexityRequest(BaseModel):
    text: str


class BatchRequest(BaseModel):
    texts: list[str]


class PerplexityResponse(BaseModel):
    perplexity: float
    token_count: int
    model_id: str


class BatchResponse(BaseModel):
    results: list[PerplexityResponse]


class _ScoreError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={"code": self.code, "message": self.message},
        )


def create_app(model_path: Optional[Union[str, Path]] = None) -> FastAPI:
    app = FastAPI(title="ppl-service", version="0.1.0")

    model: Optional[LanguageModel]
    try:
        model = load_default(model_path)
        model_id = model.model_id
    except (OSError, ValueError, KeyError) as exc:
        logger.error("model load failed: %s", exc)
        model = None
        model_id = DEFAULT_MODEL_ID

    def score(text: str) -> PerplexityResponse:
        if model is None:
            raise _ScoreError(
                503, "MODEL_UNAVAILABLE", "the scoring model failed to load"
            )
        if not text.strip():
            raise _ScoreError(400, "EMPTY_TEXT", "text is empty after trimming")
        try:
            perplexity, token_count = model.perplexity(text)
        except EmptyTextError:
            raise _ScoreError(
                400, "EMPTY_TEXT", "text contains no scoreable tokens"
            ) from None
        except ContextExceededError as exc:
            raise _ScoreError(413, "CONTEXT_EXCEEDED", str(exc)) from None
        return PerplexityResponse(
            perplexity=perplexity, token_count=token_count, model_id=model.model_id
        )

    @app.get("/health")
    def health() -> dict:
        return {"model_id": model_id, "ready": model is not None}

    @app.post("/perplexity", response_model=PerplexityResponse)
    def perplexity(request: PerplexityRequest):
        try:
            return score(request.text)
        except _ScoreError as exc:
            return exc.response()

    @app.post("/perplexity/batch", response_model=BatchResponse)
    def perplexity_batch(request: BatchRequest):
        if model is None:
            return _ScoreError(
                503, "MODEL_UNAVAILABLE", "the scoring model failed to load"
            ).response()
        results = []
        for index, text in enumerate(request.texts):
            try:
                results.append(score(text))
            except _ScoreError as exc:
                # one bad item fails the whole batch, with the offender named
                exc.message = f"item {index}: {exc.message}"
                return exc.response()
        return BatchResponse(results=results)

    return app
