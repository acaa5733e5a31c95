"""Retrieval prompt construction.

Retrieved neighbors vote on an answer; the vote's share of k is mapped onto
an ordered scale of linguistic quantifiers; the winning answer and its
quantifier are rendered into a hint sentence that rides along with the
question.  Segment order over image, question, and retrieval text is
configurable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, EmptyRetrievalError
from .index import Neighbor

DEFAULT_QUANTIFIERS = (
    "very unlikely",
    "unlikely",
    "maybe",
    "likely",
    "very likely",
    "certainly",
)

DEFAULT_TEMPLATE = "I believe the answer is {quantifier} {answer}"
ALTERNATE_TEMPLATE = "{answer} is {quantifier} the answer"

_SEGMENT_BY_CODE = {"I": "image", "Q": "question", "R": "retrieval"}
_CODE_BY_SEGMENT = {v: k for k, v in _SEGMENT_BY_CODE.items()}


@dataclass(frozen=True, slots=True)
class QuantifierScale:
    """An ordered scale of confidence words, weakest first."""

    quantifiers: tuple[str, ...] = DEFAULT_QUANTIFIERS

    def __post_init__(self):
        object.__setattr__(self, "quantifiers", tuple(self.quantifiers))
        if not self.quantifiers:
            raise ConfigError("a quantifier scale needs at least one entry")
        if len(set(self.quantifiers)) != len(self.quantifiers):
            raise ConfigError("quantifier scale entries must be unique")
        if any(not q for q in self.quantifiers):
            raise ConfigError("quantifier scale entries must be nonempty")

    def __len__(self) -> int:
        return len(self.quantifiers)

    def index_of(self, quantifier: str) -> int:
        return self.quantifiers.index(quantifier)


@dataclass(frozen=True, slots=True)
class RetrievalPromptTemplate:
    """A sentence pattern with one {quantifier} slot and one {answer} slot."""

    pattern: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        for slot in ("{quantifier}", "{answer}"):
            if self.pattern.count(slot) != 1:
                raise ConfigError(f"template must contain {slot} exactly once")

    def render(self, quantifier: str, answer: str) -> str:
        return self.pattern.replace("{quantifier}", quantifier).replace("{answer}", answer)


@dataclass(frozen=True, slots=True)
class RetrievedVote:
    """One neighbor's vote: where it came from and what it answered."""

    neighbor: Neighbor
    answer: str


@dataclass(frozen=True, slots=True)
class MajorityResult:
    """The winning answer, how many votes it drew, and its best exemplar."""

    answer: str
    frequency: int
    exemplar_id: str


def majority_answer(votes) -> MajorityResult:
    """Most frequent answer among the votes.

    Frequency ties go to the answer carried by the highest-similarity vote,
    then to the ascending record id.  The exemplar is the winning answer's
    highest-similarity vote.  The result is invariant under vote order.
    """
    ordered = list(votes)
    if not ordered:
        raise EmptyRetrievalError("majority vote over zero retrieved neighbors")
    counts: dict[str, int] = {}
    # Best vote per answer: highest similarity, ties to the smaller id.
    best: dict[str, Neighbor] = {}
    for vote in ordered:
        counts[vote.answer] = counts.get(vote.answer, 0) + 1
        incumbent = best.get(vote.answer)
        if incumbent is None or (-vote.neighbor.similarity, vote.neighbor.record_id) < (
            -incumbent.similarity,
            incumbent.record_id,
        ):
            best[vote.answer] = vote.neighbor
    winner = min(
        counts,
        key=lambda answer: (-counts[answer], -best[answer].similarity, best[answer].record_id),
    )
    return MajorityResult(
        answer=winner, frequency=counts[winner], exemplar_id=best[winner].record_id
    )


def select_quantifier(frequency: int, k: int, scale: QuantifierScale) -> str:
    """Map a vote share onto the scale.

    With M quantifiers, share f/k falls in the i-th bucket when
    (i-1)/M <= f/k < i/M; a unanimous vote (f == k) takes the top bucket.
    Comparisons are integer-exact.
    """
    if k <= 0:
        raise DomainError(f"k must be >= 1, got {k}")
    if frequency < 1 or frequency > k:
        raise DomainError(f"frequency must lie in [1, {k}], got {frequency}")
    m = len(scale)
    if frequency == k:
        return scale.quantifiers[m - 1]
    # (i-1)*k <= f*m < i*k picks i = floor(f*m/k) + 1 without touching floats.
    bucket = frequency * m // k + 1
    return scale.quantifiers[bucket - 1]


@dataclass(frozen=True, slots=True)
class PromptOrder:
    """A permutation of the image, question, and retrieval segments."""

    segments: tuple[str, str, str] = ("image", "question", "retrieval")

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if sorted(self.segments) != ["image", "question", "retrieval"]:
            raise ConfigError(
                f"order must permute image/question/retrieval, got {self.segments!r}"
            )

    @classmethod
    def from_code(cls, code: str) -> "PromptOrder":
        """Build from a three-letter code such as "IQR"."""
        if sorted(code.upper()) != ["I", "Q", "R"]:
            raise ConfigError(f"order code must permute I, Q, R, got {code!r}")
        return cls(tuple(_SEGMENT_BY_CODE[ch] for ch in code.upper()))

    @property
    def code(self) -> str:
        return "".join(_CODE_BY_SEGMENT[s] for s in self.segments)


def instruction_for(q_type: str | None) -> str:
    """Task instruction prefixed to the question segment."""
    if q_type:
        return f"Answer the {q_type} question:"
    return "Answer the question:"


@dataclass(frozen=True, eq=False)
class AssembledPrompt:
    """Everything the generator consumes, with an explicit segment order.

    The retrieval segment is omitted entirely (None) for zero-shot prompts;
    an absent hint and an empty hint are different things.
    """

    image_tokens: np.ndarray
    instruction: str
    question: str
    retrieval_text: str | None
    order: PromptOrder

    @property
    def question_text(self) -> str:
        """The question segment as rendered: instruction, space, question."""
        return f"{self.instruction} {self.question}"

    def segment_texts(self) -> list[tuple[str, str]]:
        """(name, text) pairs in prompt order; image text is a placeholder."""
        rendered = {
            "image": f"<image:{self.image_tokens.shape[0]}x{self.image_tokens.shape[1]}>",
            "question": self.question_text,
            "retrieval": self.retrieval_text,
        }
        return [(name, rendered[name]) for name in self.order.segments if rendered[name] is not None]


def assemble_prompt(
    image_tokens,
    instruction: str,
    question: str,
    retrieval_text: str | None,
    order: PromptOrder,
) -> AssembledPrompt:
    """Bundle segments into a prompt, validating the token matrix shape."""
    tokens = np.asarray(image_tokens, dtype=np.float32)
    if tokens.ndim != 2 or tokens.shape[0] == 0 or tokens.shape[1] == 0:
        raise ConfigError(f"image tokens must be a nonempty 2-d matrix, got shape {tokens.shape}")
    return AssembledPrompt(
        image_tokens=tokens,
        instruction=instruction,
        question=question,
        retrieval_text=retrieval_text,
        order=order,
    )


@dataclass(frozen=True, slots=True)
class PromptConfig:
    """Order, template, and scale; defaults are the best-performing choices."""

    order: PromptOrder = field(default_factory=PromptOrder)
    template: RetrievalPromptTemplate = field(default_factory=RetrievalPromptTemplate)
    scale: QuantifierScale = field(default_factory=QuantifierScale)

    def to_record(self) -> dict:
        return {
            "order": self.order.code,
            "template": self.template.pattern,
            "quantifiers": list(self.scale.quantifiers),
        }

    @classmethod
    def from_record(cls, record: dict) -> "PromptConfig":
        try:
            return cls(
                order=PromptOrder.from_code(record["order"]),
                template=RetrievalPromptTemplate(record["template"]),
                scale=QuantifierScale(tuple(record["quantifiers"])),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"invalid prompt config record: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)

    @classmethod
    def loads(cls, text: str) -> "PromptConfig":
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid prompt config JSON: {exc}") from exc
        return cls.from_record(record)
