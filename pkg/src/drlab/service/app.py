"""HTTP facade over the operation handlers.

Error contract: domain usage errors map to 400 with ``error_kind="usage"``;
numeric-guard trips map to 500 with ``error_kind="numeric_guard"`` and the
offending generation when known. Verification failures are not errors — they
come back as a 200 response with ``all_passed=false``.
"""

from __future__ import annotations

import json
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import NumericGuard, UsageError
from . import handlers
from .schemas import (
    ErrorBody,
    EvolveRequest,
    EvolveResponse,
    HealthResponse,
    Lemma27Request,
    Lemma27Response,
    McRequest,
    McResponse,
    SweepRequest,
    SweepResponse,
    VerifyRequest,
    VerifyResponse,
)

__all__ = ["create_app"]


class _LenientJSONResponse(JSONResponse):
    """JSON response that tolerates non-finite floats.

    Fitted constants can legitimately be ``inf`` (e.g. a vacuous tail
    expectation); Python's reader on the client side accepts the extended
    literals, so round-trips stay lossless.
    """

    def render(self, content: Any) -> bytes:
        return json.dumps(
            content, ensure_ascii=False, allow_nan=True, separators=(",", ":")
        ).encode("utf-8")


def create_app() -> FastAPI:
    app = FastAPI(
        title="drlab",
        version=__version__,
        default_response_class=_LenientJSONResponse,
    )

    @app.exception_handler(UsageError)
    async def _usage_error(_request: Request, exc: UsageError) -> JSONResponse:
        body = ErrorBody(error_kind="usage", message=str(exc))
        return _LenientJSONResponse(status_code=400, content=body.model_dump())

    @app.exception_handler(NumericGuard)
    async def _numeric_guard(_request: Request, exc: NumericGuard) -> JSONResponse:
        body = ErrorBody(
            error_kind="numeric_guard",
            message=str(exc),
            generation=getattr(exc, "generation", None),
        )
        return _LenientJSONResponse(status_code=500, content=body.model_dump())

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/evolve", response_model=EvolveResponse)
    async def evolve_route(req: EvolveRequest) -> EvolveResponse:
        return handlers.run_evolve(req)

    @app.post("/verify", response_model=VerifyResponse)
    async def verify_route(req: VerifyRequest) -> VerifyResponse:
        return handlers.run_verify(req)

    @app.post("/sweep-alpha", response_model=SweepResponse)
    async def sweep_route(req: SweepRequest) -> SweepResponse:
        return handlers.run_sweep(req)

    @app.post("/mc", response_model=McResponse)
    async def mc_route(req: McRequest) -> McResponse:
        return handlers.run_mc(req)

    @app.post("/lemma27", response_model=Lemma27Response)
    async def lemma27_route(req: Lemma27Request) -> Lemma27Response:
        return handlers.run_lemma27(req)

    return app
