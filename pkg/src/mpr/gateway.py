"""Model backends behind one interface.

Every neural operation the engine needs (pair encoding for retrieval keys,
image token extraction, conditioned generation) goes through a gateway.
The mock gateway is pure arithmetic over input bytes so the whole engine
can be exercised hermetically; the remote gateway speaks a small JSON
protocol to a model server.
"""

from __future__ import annotations

import base64
import os
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

from .errors import DimensionError, GatewayUnavailable, ImageNotFound, MockParseError
from .index import Embedding
from .prompts import AssembledPrompt, PromptConfig

DEFAULT_TIMEOUT = 30.0

INLINE_IMAGE_PREFIX = "b64:"


@dataclass(frozen=True, slots=True)
class EncoderDescriptor:
    """Shape contract a backend promises: where every dimension comes from."""

    name: str
    text_dim: int
    image_dim: int
    token_dim: int
    token_count: int

    def __post_init__(self):
        for label in ("text_dim", "image_dim", "token_dim", "token_count"):
            if getattr(self, label) <= 0:
                raise DimensionError(f"{label} must be positive")

    @property
    def key_dim(self) -> int:
        """Retrieval keys concatenate the image summary and text end tokens."""
        return self.image_dim + self.text_dim


@dataclass(frozen=True, slots=True)
class GenerationResult:
    """Generated text, plus the segment order echo some backends provide."""

    text: str
    segments: tuple[str, ...] | None = None


class ModelGateway:
    """Interface every backend implements."""

    def descriptor(self) -> EncoderDescriptor:
        raise NotImplementedError

    def encode_pair(self, question: str, image_ref: str) -> Embedding:
        raise NotImplementedError

    def encode_image_tokens(self, image_ref: str) -> np.ndarray:
        raise NotImplementedError

    def generate(self, prompt: AssembledPrompt) -> GenerationResult:
        raise NotImplementedError


def byte_fold(text: str, dim: int) -> np.ndarray:
    """Fold a string's UTF-8 bytes into a unit vector of the given width.

    Byte b at position j adds (b mod 7) - 3 to slot (31*j + b) mod dim.
    The accumulator is L2-normalized; a zero accumulator becomes the first
    standard basis vector so every output has unit norm.
    """
    acc = np.zeros(dim, dtype=np.float64)
    for j, b in enumerate(text.encode("utf-8")):
        acc[(31 * j + b) % dim] += (b % 7) - 3
    norm = float(np.sqrt(acc @ acc))
    if norm == 0.0:
        basis = np.zeros(dim, dtype=np.float64)
        basis[0] = 1.0
        return basis
    return acc / norm


class MockGateway(ModelGateway):
    """Hermetic backend: deterministic hashing instead of neural networks.

    encode_pair folds the image_ref into the image half and the question
    into the text half, then unit-normalizes the concatenation.  generate
    echoes the answer back out of the retrieval hint when the hint's
    quantifier sits at or above the echo threshold, and says "unknown"
    otherwise.  Identical inputs always produce identical outputs.
    """

    def __init__(
        self,
        text_dim: int = 16,
        image_dim: int = 16,
        token_dim: int = 8,
        token_count: int = 4,
        prompt_config: PromptConfig | None = None,
        echo_threshold: int | None = None,
    ):
        self._descriptor = EncoderDescriptor(
            name="mock",
            text_dim=text_dim,
            image_dim=image_dim,
            token_dim=token_dim,
            token_count=token_count,
        )
        self._prompt_config = prompt_config if prompt_config is not None else PromptConfig()
        scale = self._prompt_config.scale
        if echo_threshold is None:
            # Hints below "likely" read as too hedged to trust.
            if "likely" in scale.quantifiers:
                echo_threshold = scale.index_of("likely")
            else:
                echo_threshold = len(scale) // 2
        self.echo_threshold = echo_threshold

    def descriptor(self) -> EncoderDescriptor:
        return self._descriptor

    def encode_pair(self, question: str, image_ref: str) -> Embedding:
        d = self._descriptor
        image_half = byte_fold(image_ref, d.image_dim)
        text_half = byte_fold(question, d.text_dim)
        combined = np.concatenate([image_half, text_half])
        combined = combined / float(np.sqrt(combined @ combined))
        return Embedding(combined)

    def encode_image_tokens(self, image_ref: str) -> np.ndarray:
        d = self._descriptor
        rows = [byte_fold(f"{image_ref}::{row}", d.token_dim) for row in range(d.token_count)]
        return np.stack(rows).astype(np.float32)

    def _parse_hint(self, retrieval_text: str) -> tuple[str, str]:
        """Recover (quantifier, answer) from a rendered retrieval hint."""
        pattern = self._prompt_config.template.pattern
        # Longest quantifier first so "very likely" never parses as "likely".
        for quantifier in sorted(self._prompt_config.scale.quantifiers, key=len, reverse=True):
            filled = pattern.replace("{quantifier}", quantifier)
            prefix, _, suffix = filled.partition("{answer}")
            if (
                retrieval_text.startswith(prefix)
                and retrieval_text.endswith(suffix)
                and len(retrieval_text) >= len(prefix) + len(suffix)
            ):
                answer = retrieval_text[len(prefix) : len(retrieval_text) - len(suffix)]
                if answer:
                    return quantifier, answer
        raise MockParseError(f"retrieval text does not match the template: {retrieval_text!r}")

    def generate(self, prompt: AssembledPrompt) -> GenerationResult:
        segments = tuple(name for name, _ in prompt.segment_texts())
        if prompt.retrieval_text is None:
            return GenerationResult(text="unknown", segments=segments)
        quantifier, answer = self._parse_hint(prompt.retrieval_text)
        if self._prompt_config.scale.index_of(quantifier) >= self.echo_threshold:
            return GenerationResult(text=answer, segments=segments)
        return GenerationResult(text="unknown", segments=segments)


def resolve_image_argument(image: str, inline_files: bool) -> str:
    """Turn a CLI image argument into a gateway reference.

    When inline_files is set and the argument names a readable file, the
    bytes travel with the request as base64; otherwise the string passes
    through as an opaque reference.
    """
    if inline_files and os.path.isfile(image):
        data = base64.b64encode(Path(image).read_bytes()).decode("ascii")
        return INLINE_IMAGE_PREFIX + data
    return image


def _image_fields(image_ref: str) -> dict:
    if image_ref.startswith(INLINE_IMAGE_PREFIX):
        return {"image_b64": image_ref[len(INLINE_IMAGE_PREFIX) :], "image_ref": None}
    return {"image_b64": None, "image_ref": image_ref}


class RemoteGateway(ModelGateway):
    """Client for a model server speaking the JSON gateway protocol."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self._endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(base_url=self._endpoint, timeout=timeout)
        self._cached_descriptor: EncoderDescriptor | None = None

    def close(self) -> None:
        self._client.close()

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            response = self._client.request(method, path, json=payload)
        except httpx.HTTPError as exc:
            raise GatewayUnavailable(f"{path}: {exc}") from exc
        if response.status_code == 404:
            raise ImageNotFound(f"{path}: backend could not resolve the image")
        if response.status_code != 200:
            raise GatewayUnavailable(f"{path}: backend returned {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise GatewayUnavailable(f"{path}: backend returned non-JSON") from exc

    def descriptor(self) -> EncoderDescriptor:
        if self._cached_descriptor is None:
            record = self._request("GET", "/v1/descriptor")
            try:
                self._cached_descriptor = EncoderDescriptor(
                    name=str(record["name"]),
                    text_dim=int(record["text_dim"]),
                    image_dim=int(record["image_dim"]),
                    token_dim=int(record["token_dim"]),
                    token_count=int(record["token_count"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise GatewayUnavailable(f"malformed descriptor: {exc}") from exc
        return self._cached_descriptor

    def encode_pair(self, question: str, image_ref: str) -> Embedding:
        payload = {"question": question, **_image_fields(image_ref)}
        record = self._request("POST", "/v1/encode_pair", payload)
        try:
            embedding = Embedding(np.asarray(record["embedding"], dtype=np.float32))
            declared = int(record["dim"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayUnavailable(f"malformed encode_pair response: {exc}") from exc
        if embedding.dim != declared:
            raise GatewayUnavailable(
                f"encode_pair dim mismatch: payload says {declared}, vector has {embedding.dim}"
            )
        return embedding

    def encode_image_tokens(self, image_ref: str) -> np.ndarray:
        record = self._request("POST", "/v1/encode_image", _image_fields(image_ref))
        try:
            tokens = np.asarray(record["tokens"], dtype=np.float32)
            l_v, d = int(record["l_v"]), int(record["d"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GatewayUnavailable(f"malformed encode_image response: {exc}") from exc
        if tokens.ndim != 2 or tokens.shape != (l_v, d):
            raise GatewayUnavailable(
                f"encode_image shape mismatch: payload says {(l_v, d)}, got {tokens.shape}"
            )
        return tokens

    def generate(self, prompt: AssembledPrompt) -> GenerationResult:
        payload = {
            "image_tokens": prompt.image_tokens.astype(float).tolist(),
            "instruction": prompt.instruction,
            "question": prompt.question,
            "retrieval": prompt.retrieval_text,
            "order": prompt.order.code,
        }
        record = self._request("POST", "/v1/generate", payload)
        if "text" not in record or not isinstance(record["text"], str):
            raise GatewayUnavailable("malformed generate response: missing text")
        return GenerationResult(text=record["text"])
