"""The four-endpoint HTTP surface over a model bundle."""

from __future__ import annotations

import base64
import binascii
import io
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, Field

from .bundle import ModelBundle
from .errors import BadRequest, ImageNotFound, SidecarError


class ImageArgs(BaseModel):
    image_b64: str | None = None
    image_ref: str | None = None


class EncodePairRequest(ImageArgs):
    question: str = Field(min_length=1)


class GenerateRequest(BaseModel):
    image_tokens: list[list[float]]
    instruction: str = ""
    question: str
    retrieval: str | None = None
    order: str = "IQR"


def _decode_inline(payload: str) -> Image.Image:
    try:
        raw = base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"image_b64 is not valid base64: {exc}") from exc
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except UnidentifiedImageError as exc:
        raise BadRequest("image_b64 does not decode to a known image format") from exc
    return image.convert("RGB")


def create_app(bundle: ModelBundle, image_root: str | None = None) -> FastAPI:
    app = FastAPI(title="mpr-sidecar")
    root = Path(image_root).resolve() if image_root else None

    def _resolve_ref(ref: str) -> Image.Image:
        if root is None:
            raise ImageNotFound(f"image_not_found: {ref} (no image root configured)")
        candidate = (root / ref).resolve()
        if not candidate.is_relative_to(root) or not candidate.is_file():
            raise ImageNotFound(f"image_not_found: {ref}")
        try:
            image = Image.open(candidate)
            image.load()
        except UnidentifiedImageError as exc:
            raise BadRequest(f"image_ref {ref} is not a readable image") from exc
        return image.convert("RGB")

    def _image_from(args: ImageArgs) -> Image.Image:
        if (args.image_b64 is None) == (args.image_ref is None):
            raise BadRequest("set exactly one of image_b64 or image_ref")
        if args.image_b64 is not None:
            return _decode_inline(args.image_b64)
        return _resolve_ref(args.image_ref)

    @app.exception_handler(SidecarError)
    async def handle_sidecar_error(_: Request, exc: SidecarError):
        return JSONResponse(status_code=exc.status, content={"error": exc.message})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors())})

    @app.exception_handler(Exception)
    async def handle_model_failure(_: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": f"model_failure: {exc}"})

    @app.get("/v1/descriptor")
    def descriptor():
        return bundle.descriptor()

    @app.post("/v1/encode_pair")
    def encode_pair(request: EncodePairRequest):
        embedding = bundle.encode_pair(request.question, _image_from(request))
        return {"embedding": embedding, "dim": len(embedding)}

    @app.post("/v1/encode_image")
    def encode_image(request: ImageArgs):
        tokens = bundle.encode_image_tokens(_image_from(request))
        return {"tokens": tokens, "l_v": len(tokens), "d": len(tokens[0])}

    @app.post("/v1/generate")
    def generate(request: GenerateRequest):
        text = bundle.generate(
            request.image_tokens, request.instruction, request.question,
            request.retrieval, request.order,
        )
        return {"text": text}

    return app
