"""Model bundle: the dual encoder, the generator, and the projection that
bridges them, plus the math behind each endpoint."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import BadRequest, SidecarError

VALID_SEGMENTS = frozenset("IQR")


def build_projection(in_dim: int, out_dim: int, seed: int) -> torch.nn.Linear:
    """Fixed random linear map from vision width to generator width.

    Seeded so the same (dims, seed) always yields the same matrix; scaled by
    1/sqrt(in_dim) to keep projected activations at unit order.
    """
    generator = torch.Generator().manual_seed(seed)
    weight = torch.randn(out_dim, in_dim, generator=generator) / (in_dim ** 0.5)
    projection = torch.nn.Linear(in_dim, out_dim, bias=False)
    with torch.no_grad():
        projection.weight.copy_(weight)
    projection.requires_grad_(False)
    return projection


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise SidecarError("encoder produced a degenerate vector")
    return vec / norm


@dataclass
class ModelBundle:
    """Everything the service needs to answer model requests.

    clip_model pools question text into the text half and image pixels into
    the image half of a retrieval key; its penultimate vision layer supplies
    image tokens, projected into the generator's embedding width.  t5_model
    decodes greedily, so identical requests produce identical text.
    """

    name: str
    clip_model: object
    clip_tokenizer: object
    image_processor: object
    t5_model: object
    t5_tokenizer: object
    projection: torch.nn.Linear

    def __post_init__(self):
        self.clip_model.eval()
        self.t5_model.eval()

    @property
    def text_dim(self) -> int:
        return int(self.clip_model.config.text_config.hidden_size)

    @property
    def image_dim(self) -> int:
        return int(self.clip_model.config.vision_config.hidden_size)

    @property
    def token_dim(self) -> int:
        return int(self.t5_model.config.d_model)

    @property
    def token_count(self) -> int:
        vision = self.clip_model.config.vision_config
        return (vision.image_size // vision.patch_size) ** 2 + 1

    def descriptor(self) -> dict:
        return {
            "name": self.name,
            "text_dim": self.text_dim,
            "image_dim": self.image_dim,
            "token_dim": self.token_dim,
            "token_count": self.token_count,
        }

    def _pixels(self, image) -> torch.Tensor:
        return self.image_processor(images=image, return_tensors="pt").pixel_values

    def _text_half(self, question: str) -> np.ndarray:
        encoded = self.clip_tokenizer(
            [question], return_tensors="pt", truncation=True,
            max_length=self.clip_model.config.text_config.max_position_embeddings,
        )
        with torch.no_grad():
            out = self.clip_model.text_model(**encoded)
        return out.pooler_output[0].numpy().astype(np.float64)

    def _vision_forward(self, image, hidden_states: bool = False):
        with torch.no_grad():
            return self.clip_model.vision_model(
                pixel_values=self._pixels(image), output_hidden_states=hidden_states
            )

    def encode_pair(self, question: str, image) -> list[float]:
        """Unit-norm key: [image half; text half], each half unit-norm too."""
        image_half = _unit(self._vision_forward(image).pooler_output[0].numpy().astype(np.float64))
        text_half = _unit(self._text_half(question))
        key = _unit(np.concatenate([image_half, text_half]))
        return [float(x) for x in key]

    def encode_image_tokens(self, image) -> list[list[float]]:
        """Penultimate-layer patch sequence projected to the generator width."""
        out = self._vision_forward(image, hidden_states=True)
        penultimate = out.hidden_states[-2][0]
        with torch.no_grad():
            tokens = self.projection(penultimate)
        return [[float(x) for x in row] for row in tokens.numpy()]

    def _embed_text(self, text: str) -> torch.Tensor:
        ids = self.t5_tokenizer([text], return_tensors="pt").input_ids
        with torch.no_grad():
            return self.t5_model.get_input_embeddings()(ids)

    def generate(self, image_tokens: list[list[float]], instruction: str,
                 question: str, retrieval: str | None, order: str,
                 max_new_tokens: int = 16) -> str:
        if sorted(order) != sorted("IQR"):
            raise BadRequest(f"order must be a permutation of I, Q, R, got {order!r}")
        matrix = np.asarray(image_tokens, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise BadRequest("image_tokens must be a nonempty matrix")
        if matrix.shape[1] != self.token_dim:
            raise BadRequest(
                f"image_tokens width {matrix.shape[1]} does not match token_dim {self.token_dim}"
            )
        if not np.all(np.isfinite(matrix)):
            raise BadRequest("image_tokens must be finite")
        question_text = f"{instruction} {question}".strip()
        if not question_text:
            raise BadRequest("instruction and question are both empty")
        segments = {
            "I": torch.tensor(matrix, dtype=torch.float32).unsqueeze(0),
            "Q": self._embed_text(question_text),
            "R": self._embed_text(retrieval) if retrieval is not None else None,
        }
        parts = [segments[code] for code in order if segments[code] is not None]
        inputs = torch.cat(parts, dim=1)
        mask = torch.ones(inputs.shape[:2], dtype=torch.long)
        with torch.no_grad():
            output_ids = self.t5_model.generate(
                inputs_embeds=inputs, attention_mask=mask,
                max_new_tokens=max_new_tokens, do_sample=False, num_beams=1,
            )
        return self.t5_tokenizer.batch_decode(output_ids, skip_special_tokens=True)[0]


def load_bundle(clip_path: str, t5_path: str, seed: int = 0, name: str | None = None) -> ModelBundle:
    """Assemble a bundle from pretrained checkpoints on disk or a hub cache."""
    from transformers import (
        AutoImageProcessor,
        AutoTokenizer,
        CLIPModel,
        T5ForConditionalGeneration,
    )

    clip_model = CLIPModel.from_pretrained(clip_path)
    t5_model = T5ForConditionalGeneration.from_pretrained(t5_path)
    projection = build_projection(
        int(clip_model.config.vision_config.hidden_size),
        int(t5_model.config.d_model),
        seed,
    )
    return ModelBundle(
        name=name or f"{clip_path}+{t5_path}",
        clip_model=clip_model,
        clip_tokenizer=AutoTokenizer.from_pretrained(clip_path),
        image_processor=AutoImageProcessor.from_pretrained(clip_path),
        t5_model=t5_model,
        t5_tokenizer=AutoTokenizer.from_pretrained(t5_path),
        projection=projection,
    )
