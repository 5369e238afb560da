"""HTTP surface: GET /v1/health and POST /v1/reconstruct with JSON bodies.

Failures come back as an error envelope {code, message} with HTTP 400, the
shape the selection engine's client understands.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .service import ReconstructionEngine


class ReconstructRequest(BaseModel):
    image: str
    height: int
    width: int
    channels: int
    patch_size: int
    unmasked: list[int]


def _envelope(code: str, message: str, status: int = 400) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(engine: ReconstructionEngine) -> FastAPI:
    app = FastAPI(title="mae-oracle-server", docs_url=None, redoc_url=None)
    cfg = engine.cfg

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return _envelope("MALFORMED_REQUEST", str(exc.errors()[:3]))

    @app.get("/v1/health")
    def health():
        return {
            "model_id": engine.model_id,
            "patch_size": cfg.patch_size,
            "image_side": cfg.img_size,
        }

    @app.post("/v1/reconstruct")
    def reconstruct(req: ReconstructRequest):
        if (
            req.height != cfg.img_size
            or req.width != cfg.img_size
            or req.patch_size != cfg.patch_size
            or req.channels != cfg.in_chans
        ):
            return _envelope(
                "GEOMETRY_MISMATCH",
                f"model expects {cfg.img_size}x{cfg.img_size}x{cfg.in_chans} "
                f"with patch {cfg.patch_size}",
            )
        n = cfg.n_patches
        if len(set(req.unmasked)) != len(req.unmasked) or any(
            not 0 <= i < n for i in req.unmasked
        ):
            return _envelope("INVALID_INDICES", f"unmasked must be distinct indices in [0, {n})")
        try:
            raw = base64.b64decode(req.image.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError) as exc:
            return _envelope("INVALID_IMAGE", f"image is not valid base64: {exc}")
        expected = 4 * req.height * req.width * req.channels
        if len(raw) != expected:
            return _envelope(
                "INVALID_IMAGE", f"image holds {len(raw)} bytes, expected {expected}"
            )
        image = (
            np.frombuffer(raw, dtype="<f4")
            .reshape(req.height, req.width, req.channels)
            .astype(np.float32)
        )
        try:
            report = engine.compute_losses(image, req.unmasked)
        except ValueError as exc:
            return _envelope("INVALID_REQUEST", str(exc))
        return {
            "masked_mse": report.masked_mse,
            "full_mse": report.full_mse,
            "per_patch_mse": report.per_patch_mse.tolist(),
            "model_id": engine.model_id,
        }

    return app
