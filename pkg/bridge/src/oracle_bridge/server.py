"""FastAPI server implementing POST /v1/logits.

Response entries are the first-token top-k logprobs, descending, with token
ids remapped per the configured vocabulary table. Schema violations return
400, backend failures 502, and the configured request budget surfaces as 429
so wire clients can map it to their own budget handling.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from .backends import BackendError, BadRequest, RateLimited, make_backend, top_k_entries
from .config import BridgeConfig


class LogitsRequest(BaseModel):
    id: str = Field(min_length=1)
    prompt: str | None = None
    features: list[float] | None = None
    top_k: int = Field(ge=1)

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def _at_least_one_input(self):
        if self.prompt is None and self.features is None:
            raise ValueError("request must carry features and/or a prompt")
        return self


class LogprobEntry(BaseModel):
    token_id: int = Field(ge=0)
    logprob: float = Field(le=0.0)


class LogitsResponse(BaseModel):
    model_id: str
    entries: list[LogprobEntry]


def create_app(config: BridgeConfig, backend=None) -> FastAPI:
    app = FastAPI(title="oracle-bridge")
    backend = backend if backend is not None else make_backend(config)
    vocab_map = None if getattr(backend, "remaps_internally", False) else config.vocab_map
    counter_lock = threading.Lock()
    served = {"count": 0}

    @app.exception_handler(RequestValidationError)
    async def _bad_schema(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:3])})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_id": config.model_id}

    @app.post("/v1/logits", response_model=LogitsResponse)
    def logits(request: LogitsRequest):
        if config.max_requests is not None:
            with counter_lock:
                if served["count"] >= config.max_requests:
                    return JSONResponse(status_code=429, content={"error": "request budget spent"})
                served["count"] += 1
        try:
            logprobs = backend.full_logprobs(request.features, request.prompt)
            entries = top_k_entries(logprobs, request.top_k, vocab_map)
        except BadRequest as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        except RateLimited as exc:
            return JSONResponse(status_code=429, content={"error": str(exc)})
        except BackendError as exc:
            return JSONResponse(status_code=502, content={"error": str(exc)})
        return LogitsResponse(
            model_id=config.model_id,
            entries=[LogprobEntry(token_id=tid, logprob=lp) for tid, lp in entries],
        )

    return app


def serve(config: BridgeConfig, backend=None) -> None:
    """Run the bridge until interrupted."""
    import uvicorn

    app = create_app(config, backend=backend)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
