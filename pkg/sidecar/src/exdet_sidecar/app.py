"""FastAPI application implementing wire protocol v1.

Error mapping: 400 for schema violations (malformed bodies, undecodable
images), 501 for unconfigured roles, 500 with an opaque message for
inference failures. Each role serializes its inferences behind a lock;
different roles run concurrently.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import SidecarConfig
from .roles import InferenceError, build_role, decode_image_b64


class FeaturesRequest(BaseModel):
    image_png_b64: str


class MatchRequest(BaseModel):
    image_a_png_b64: str
    image_b_png_b64: str


class PromptModel(BaseModel):
    box: list[float] = Field(min_length=4, max_length=4)
    polarity: bool


class DetectRequest(BaseModel):
    image_png_b64: str
    text: str
    prompts: list[PromptModel] = Field(default_factory=list)


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    app = FastAPI(title="exdet-sidecar", docs_url=None, redoc_url=None)

    roles = {
        "features": build_role("features", config.features),
        "match": build_role("match", config.match),
        "detect": build_role("detect", config.detect),
    }
    locks = {name: threading.Lock() for name in roles}

    @app.exception_handler(RequestValidationError)
    async def _schema_violation(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        field = ".".join(str(p) for p in first.get("loc", ()) if p != "body")
        return JSONResponse(
            status_code=400,
            content={"error": f"schema violation in field {field or 'body'}"},
        )

    @app.exception_handler(ValueError)
    async def _bad_value(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(InferenceError)
    async def _inference_failed(request: Request, exc: InferenceError):
        # Opaque by design: no model internals or stack traces on the wire.
        return JSONResponse(status_code=500, content={"error": "inference failed"})

    def _require(role: str):
        adapter = roles[role]
        if adapter is None:
            raise _Unconfigured(role)
        return adapter

    class _Unconfigured(Exception):
        def __init__(self, role: str):
            self.role = role

    @app.exception_handler(_Unconfigured)
    async def _role_unconfigured(request: Request, exc: _Unconfigured):
        return JSONResponse(
            status_code=501, content={"error": f"role {exc.role!r} not configured"}
        )

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "models": {
                name: (adapter.name if adapter is not None else None)
                for name, adapter in roles.items()
            },
        }

    @app.post("/v1/features")
    def features(req: FeaturesRequest):
        adapter = _require("features")
        img = decode_image_b64(req.image_png_b64)
        with locks["features"]:
            return adapter.features(img)

    @app.post("/v1/match")
    def match(req: MatchRequest):
        adapter = _require("match")
        img_a = decode_image_b64(req.image_a_png_b64)
        img_b = decode_image_b64(req.image_b_png_b64)
        with locks["match"]:
            return adapter.match(img_a, img_b)

    @app.post("/v1/detect")
    def detect(req: DetectRequest):
        adapter = _require("detect")
        img = decode_image_b64(req.image_png_b64)
        prompts = [{"box": p.box, "polarity": p.polarity} for p in req.prompts]
        with locks["detect"]:
            return adapter.detect(img, req.text, prompts)

    return app
