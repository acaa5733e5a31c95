"""Retrieval-augmented multimodal prompting engine for visual QA.

Questions are answered by retrieving similar (question, image) pairs from
an indexed mapping set, voting on their stored answers, and handing the
generator a natural-language hint whose confidence quantifier reflects the
vote share.  All neural operations sit behind a gateway with a hermetic
mock, so everything here runs deterministically without model weights.
"""

from .canon import CanonAnswer, lcs_length, map_to_label, normalize
from .datasets import (
    CaptionExample,
    DatasetSplit,
    LabelSet,
    VqaExample,
    extract_label_set,
    load_captions,
    load_index,
    load_vqa,
    save_captions,
    save_index,
    save_vqa,
)
from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    DuplicateIdError,
    EmptyDatasetError,
    EmptyIndexError,
    EmptyLabelSetError,
    EmptyRetrievalError,
    FormatError,
    GatewayUnavailable,
    ImageNotFound,
    MockParseError,
    MprError,
    ParseError,
    ZeroNormError,
)
from .gateway import (
    EncoderDescriptor,
    GenerationResult,
    MockGateway,
    ModelGateway,
    RemoteGateway,
    byte_fold,
)
from .harness import EvalConfig, EvalReport, ingest, k_sweep, knn_baseline, report_render, run_eval
from .index import (
    Embedding,
    Neighbor,
    RetrievalIndex,
    RetrievalRecord,
    build_index,
    cosine_similarity,
    top_k,
)
from .pipeline import AnswerPipeline, AnswerTrace, exclude_self
from .prompts import (
    ALTERNATE_TEMPLATE,
    DEFAULT_QUANTIFIERS,
    DEFAULT_TEMPLATE,
    AssembledPrompt,
    MajorityResult,
    PromptConfig,
    PromptOrder,
    QuantifierScale,
    RetrievalPromptTemplate,
    RetrievedVote,
    assemble_prompt,
    instruction_for,
    majority_answer,
    select_quantifier,
)
from .synth import (
    SynthConfig,
    TemplateBank,
    default_bank,
    generate,
    generation_metadata,
    load_bank,
    match_keywords,
    save_bank,
)

__version__ = "0.1.0"

__all__ = [
    "ALTERNATE_TEMPLATE",
    "AnswerPipeline",
    "AnswerTrace",
    "AssembledPrompt",
    "CanonAnswer",
    "CaptionExample",
    "ConfigError",
    "DatasetSplit",
    "DEFAULT_QUANTIFIERS",
    "DEFAULT_TEMPLATE",
    "DimensionError",
    "DomainError",
    "DuplicateIdError",
    "Embedding",
    "EmptyDatasetError",
    "EmptyIndexError",
    "EmptyLabelSetError",
    "EmptyRetrievalError",
    "EncoderDescriptor",
    "EvalConfig",
    "EvalReport",
    "FormatError",
    "GatewayUnavailable",
    "GenerationResult",
    "ImageNotFound",
    "LabelSet",
    "MajorityResult",
    "MockGateway",
    "MockParseError",
    "ModelGateway",
    "MprError",
    "Neighbor",
    "ParseError",
    "PromptConfig",
    "PromptOrder",
    "QuantifierScale",
    "RemoteGateway",
    "RetrievalIndex",
    "RetrievalPromptTemplate",
    "RetrievalRecord",
    "RetrievedVote",
    "SynthConfig",
    "TemplateBank",
    "VqaExample",
    "ZeroNormError",
    "assemble_prompt",
    "build_index",
    "byte_fold",
    "cosine_similarity",
    "default_bank",
    "exclude_self",
    "extract_label_set",
    "generate",
    "generation_metadata",
    "ingest",
    "instruction_for",
    "k_sweep",
    "knn_baseline",
    "lcs_length",
    "load_bank",
    "load_captions",
    "load_index",
    "load_vqa",
    "majority_answer",
    "map_to_label",
    "match_keywords",
    "normalize",
    "report_render",
    "run_eval",
    "save_bank",
    "save_captions",
    "save_index",
    "save_vqa",
    "select_quantifier",
    "top_k",
]
