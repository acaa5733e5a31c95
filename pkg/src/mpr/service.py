"""HTTP front end for the answering pipeline.

One endpoint does the work: POST /v1/answer takes a question plus an image
reference (or inline base64 bytes) and returns the full answer trace, so
callers can see the retrieved votes and the hint, not just the label.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .datasets import LabelSet, load_index
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    EmptyIndexError,
    EmptyLabelSetError,
    EmptyRetrievalError,
    GatewayUnavailable,
    ImageNotFound,
    MockParseError,
    MprError,
)
from .gateway import INLINE_IMAGE_PREFIX, MockGateway, RemoteGateway
from .pipeline import AnswerPipeline
from .prompts import PromptConfig

_BAD_REQUEST = (ConfigError, DimensionError, DomainError, EmptyIndexError,
                EmptyLabelSetError, EmptyRetrievalError)


class AnswerRequest(BaseModel):
    """One query.  Exactly one of image_ref / image_b64 must be set."""

    question: str = Field(..., description="The question to answer")
    image_ref: str | None = Field(None, description="Opaque image reference the backend resolves")
    image_b64: str | None = Field(None, description="Base64-encoded image bytes")
    k: int | None = Field(None, ge=0, description="Neighbors to retrieve; 0 answers zero-shot")
    q_type: str | None = Field(None, description="Question type used in the task instruction")


class NeighborModel(BaseModel):
    record_id: str
    similarity: float
    answer: str


class MajorityModel(BaseModel):
    answer: str
    frequency: int
    exemplar_id: str


class AnswerResponse(BaseModel):
    """The pipeline trace for one query."""

    question: str
    image_ref: str
    k: int
    neighbors: list[NeighborModel]
    majority: MajorityModel | None
    quantifier: str | None
    retrieval_text: str | None
    generated: str
    label: str
    exact: bool


class HealthResponse(BaseModel):
    status: str
    backend: str
    index_size: int
    key_dim: int


def create_app(pipeline: AnswerPipeline, default_k: int = 1) -> FastAPI:
    """Wrap a pipeline in the HTTP interface."""
    app = FastAPI(title="mpr answering service")

    @app.exception_handler(MprError)
    async def handle_engine_error(_, exc: MprError):
        if isinstance(exc, ImageNotFound):
            status = 404
        elif isinstance(exc, GatewayUnavailable):
            status = 502
        elif isinstance(exc, _BAD_REQUEST):
            status = 400
        else:
            status = 500
        return JSONResponse(status_code=status, content={"error": str(exc)})

    @app.get("/healthz", response_model=HealthResponse)
    async def healthz() -> HealthResponse:
        return HealthResponse(
            status="ok",
            backend=pipeline.gateway.descriptor().name,
            index_size=len(pipeline.index) if pipeline.index is not None else 0,
            key_dim=pipeline.gateway.descriptor().key_dim,
        )

    @app.post("/v1/answer", response_model=AnswerResponse)
    async def answer(request: AnswerRequest) -> AnswerResponse:
        if (request.image_ref is None) == (request.image_b64 is None):
            return JSONResponse(
                status_code=400,
                content={"error": "set exactly one of image_ref or image_b64"},
            )
        if request.image_b64 is not None:
            image_ref = INLINE_IMAGE_PREFIX + request.image_b64
        else:
            image_ref = request.image_ref
        k = default_k if request.k is None else request.k
        trace = pipeline.answer(request.question, image_ref, k, q_type=request.q_type)
        return AnswerResponse.model_validate(trace.to_record())

    return app


def build_service(
    index_path: str,
    backend: str = "mock",
    endpoint: str | None = None,
    prompt_config: PromptConfig | None = None,
    default_k: int = 1,
    echo_threshold: int | None = None,
) -> FastAPI:
    """Load an index, stand up the chosen backend, and build the app.

    Ad-hoc queries carry no gold answers, so the label set is exactly the
    answers stored in the index.
    """
    prompt_config = prompt_config if prompt_config is not None else PromptConfig()
    if backend == "mock":
        gateway = MockGateway(prompt_config=prompt_config, echo_threshold=echo_threshold)
    elif backend == "remote":
        if not endpoint:
            raise ConfigError("remote backend needs an endpoint")
        gateway = RemoteGateway(endpoint)
    else:
        raise ConfigError(f"backend must be mock or remote, got {backend!r}")
    index = load_index(index_path)
    if index.dim != gateway.descriptor().key_dim:
        raise DimensionError(
            f"index dim {index.dim} does not match backend key dim "
            f"{gateway.descriptor().key_dim}"
        )
    labels = LabelSet(record.answer for record in index.records)
    pipeline = AnswerPipeline(gateway, index, labels, prompt_config=prompt_config)
    return create_app(pipeline, default_k=default_k)
