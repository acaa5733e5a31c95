"""Shared fixtures: a tiny seeded model bundle built locally, no downloads."""

from __future__ import annotations

import pytest
import torch
from PIL import Image
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import (
    CLIPConfig,
    CLIPImageProcessor,
    CLIPModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from mpr_sidecar import ModelBundle, build_projection

WORDS = (
    "answer the question what plane organ modality is shown in this image "
    "i believe certainly likely maybe unlikely very axial coronal heart lung "
    "liver ct mri x-ray ultrasound yes no"
).split()


def _word_tokenizer(words, eos_last: bool) -> PreTrainedTokenizerFast:
    # The dual encoder pools at the end-of-text token, which transformers
    # locates either by config.eos_token_id or as the highest id; giving the
    # eos token the last id satisfies both rules.
    vocab = {"<unk>": 0, "<pad>": 1} if eos_last else {"<pad>": 0, "</s>": 1, "<unk>": 2}
    for word in words:
        vocab.setdefault(word, len(vocab))
    if eos_last:
        vocab["</s>"] = len(vocab)
    tokenizer = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tokenizer.pre_tokenizer = Whitespace()
    tokenizer.post_processor = TemplateProcessing(
        single="$A </s>", special_tokens=[("</s>", vocab["</s>"])]
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer, unk_token="<unk>", pad_token="<pad>", eos_token="</s>"
    )


def build_tiny_bundle(seed: int = 0) -> ModelBundle:
    clip_tokenizer = _word_tokenizer(WORDS, eos_last=True)
    t5_tokenizer = _word_tokenizer(WORDS, eos_last=False)
    torch.manual_seed(seed)
    clip_config = CLIPConfig(
        text_config={
            "vocab_size": clip_tokenizer.vocab_size, "hidden_size": 32,
            "intermediate_size": 64, "num_hidden_layers": 2,
            "num_attention_heads": 4, "max_position_embeddings": 64,
            "eos_token_id": clip_tokenizer.eos_token_id,
            "pad_token_id": clip_tokenizer.pad_token_id, "bos_token_id": None,
        },
        vision_config={
            "hidden_size": 32, "intermediate_size": 64, "num_hidden_layers": 2,
            "num_attention_heads": 4, "image_size": 30, "patch_size": 10,
            "num_channels": 3,
        },
    )
    clip_model = CLIPModel(clip_config)
    t5_config = T5Config(
        vocab_size=t5_tokenizer.vocab_size, d_model=32, d_kv=8, num_heads=4,
        d_ff=64, num_layers=2, num_decoder_layers=2,
        decoder_start_token_id=t5_tokenizer.pad_token_id,
        pad_token_id=t5_tokenizer.pad_token_id,
        eos_token_id=t5_tokenizer.eos_token_id,
    )
    t5_model = T5ForConditionalGeneration(t5_config)
    return ModelBundle(
        name="tiny-test",
        clip_model=clip_model,
        clip_tokenizer=clip_tokenizer,
        image_processor=CLIPImageProcessor(
            size={"shortest_edge": 30}, crop_size={"height": 30, "width": 30}
        ),
        t5_model=t5_model,
        t5_tokenizer=t5_tokenizer,
        projection=build_projection(32, 32, seed),
    )


@pytest.fixture(scope="session")
def bundle() -> ModelBundle:
    return build_tiny_bundle(seed=0)


@pytest.fixture(scope="session")
def image_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("images")
    Image.new("RGB", (40, 40), (120, 30, 200)).save(root / "a.png")
    Image.new("RGB", (64, 48), (10, 220, 60)).save(root / "b.png")
    (root / "not_an_image.png").write_bytes(b"plainly not pixels")
    return root
