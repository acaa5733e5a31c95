"""Synthetic QA generation from image captions.

Captions are scanned for known keywords; every hit yields one open question
whose answer is the keyword and one closed yes/no question.  Closed
questions flip to a distractor keyword with a configurable probability so
the output is not all-yes.  Generation is deterministic for a fixed
(captions, bank, config) triple.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .canon import normalize
from .datasets import CaptionExample, VqaExample
from .errors import ConfigError, ParseError

PRNG_ALGORITHM = "numpy-pcg64"

DEFAULT_NEGATIVE_RATIO = 0.5

_DEFAULT_TEMPLATES = {
    ("organ", "open"): (
        "What part of the body is being imaged?",
        "What is the organ shown in this image?",
    ),
    ("organ", "closed"): (
        "Does the picture contain {}?",
        "Is this a study of the {}?",
    ),
    ("organ_system", "open"): (
        "What organ system is pictured?",
        "What system is this pathology in?",
    ),
    ("organ_system", "closed"): (
        "Is this an image of the {}?",
        "Is the {} shown?",
    ),
    ("modality", "open"): (
        "What kind of scan is this?",
        "How was this image taken?",
    ),
    ("modality", "closed"): (
        "Is this a {}?",
        "Is the image a {}?",
    ),
    ("plane", "open"): (
        "What image plane is this?",
        "How is the image oriented?",
    ),
    ("plane", "closed"): (
        "Is this a {} plane?",
        "Is the image a {} section?",
    ),
}

_DEFAULT_KEYWORDS = {
    "organ": ("Heart", "Lungs", "Lung", "Liver", "Breasts", "Chest"),
    "organ_system": ("Cardiovascular System", "Respiratory System"),
    "modality": ("MRI", "T1", "T2", "CT", "X-ray", "Ultrasound", "Flair"),
    "plane": ("Axial", "Coronal", "Supratentorial", "Posteroanterior"),
}


@dataclass(frozen=True)
class TemplateBank:
    """Question templates and keyword vocabularies, grouped by question type.

    Open templates have no slot; closed templates have exactly one {} slot
    that takes a keyword.
    """

    templates: dict
    keywords: dict

    def __post_init__(self):
        for (q_type, a_type), patterns in self.templates.items():
            if a_type not in ("open", "closed"):
                raise ConfigError(f"bank a_type must be open or closed, got {a_type!r}")
            if not patterns:
                raise ConfigError(f"no templates for ({q_type}, {a_type})")
            for pattern in patterns:
                slots = pattern.count("{}")
                if a_type == "open" and slots != 0:
                    raise ConfigError(f"open template {pattern!r} must not have a slot")
                if a_type == "closed" and slots != 1:
                    raise ConfigError(f"closed template {pattern!r} needs exactly one slot")
        for q_type, words in self.keywords.items():
            if not words:
                raise ConfigError(f"no keywords for q_type {q_type!r}")
            canonical = [normalize(w) for w in words]
            if len(set(canonical)) != len(canonical):
                raise ConfigError(f"keywords for {q_type!r} collide after normalization")
            if any(not c for c in canonical):
                raise ConfigError(f"keywords for {q_type!r} must be nonempty")

    @property
    def q_types(self) -> tuple[str, ...]:
        return tuple(self.keywords)

    def fingerprint(self) -> str:
        """Stable digest of the bank content, for output metadata."""
        import hashlib

        payload = json.dumps(
            {
                "templates": {f"{q}|{a}": list(t) for (q, a), t in sorted(self.templates.items())},
                "keywords": {q: list(w) for q, w in sorted(self.keywords.items())},
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def default_bank() -> TemplateBank:
    """The bank shipped with the package: radiology organs, systems, modalities, planes."""
    return TemplateBank(
        templates={k: tuple(v) for k, v in _DEFAULT_TEMPLATES.items()},
        keywords={k: tuple(v) for k, v in _DEFAULT_KEYWORDS.items()},
    )


def load_bank(path) -> TemplateBank:
    """Load a bank from JSON lines.

    Template lines carry q_type, a_type, templates; keyword lines carry
    q_type, keywords.
    """
    templates: dict = {}
    keywords: dict = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, 1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line_number) from exc
            if not isinstance(record, dict) or "q_type" not in record:
                raise ParseError("bank line needs a q_type", line_number)
            if "templates" in record:
                if "a_type" not in record:
                    raise ParseError("template line needs an a_type", line_number)
                key = (record["q_type"], record["a_type"])
                templates.setdefault(key, ())
                templates[key] = templates[key] + tuple(record["templates"])
            elif "keywords" in record:
                q_type = record["q_type"]
                keywords.setdefault(q_type, ())
                keywords[q_type] = keywords[q_type] + tuple(record["keywords"])
            else:
                raise ParseError("bank line needs templates or keywords", line_number)
    return TemplateBank(templates=templates, keywords=keywords)


def save_bank(bank: TemplateBank, path) -> None:
    """Write a bank as JSON lines, templates first."""
    with open(path, "w", encoding="utf-8") as handle:
        for (q_type, a_type), patterns in bank.templates.items():
            handle.write(
                json.dumps(
                    {"q_type": q_type, "a_type": a_type, "templates": list(patterns)},
                    ensure_ascii=False,
                )
                + "\n"
            )
        for q_type, words in bank.keywords.items():
            handle.write(
                json.dumps({"q_type": q_type, "keywords": list(words)}, ensure_ascii=False) + "\n"
            )


def _words_with_offsets(text: str) -> list[tuple[int, str]]:
    """Lowercased word tokens with char offsets; letters and digits are word
    characters, everything else is a boundary."""
    words: list[tuple[int, str]] = []
    start = None
    chars: list[str] = []
    for position, ch in enumerate(text):
        if ch.isalnum():
            if start is None:
                start = position
            chars.append(ch.lower())
        elif start is not None:
            words.append((start, "".join(chars)))
            start = None
            chars = []
    if start is not None:
        words.append((start, "".join(chars)))
    return words


def match_keywords(caption: str, keywords) -> list[str]:
    """Keywords present in the caption as whole words, in caption order.

    Matching is case-insensitive; multi-word keywords must appear as a
    contiguous word sequence.  Each keyword appears at most once, at its
    first occurrence position.
    """
    caption_words = _words_with_offsets(caption)
    tokens = [w for _, w in caption_words]
    hits: list[tuple[int, int, str]] = []
    for rank, keyword in enumerate(keywords):
        target = [w for _, w in _words_with_offsets(keyword)]
        if not target:
            continue
        for i in range(len(tokens) - len(target) + 1):
            if tokens[i : i + len(target)] == target:
                hits.append((caption_words[i][0], rank, keyword))
                break
    hits.sort()
    return [keyword for _, _, keyword in hits]


@dataclass(frozen=True, slots=True)
class SynthConfig:
    """Knobs for the generator; defaults match the shipped evaluation setup."""

    seed: int = 0
    negative_ratio: float = DEFAULT_NEGATIVE_RATIO
    max_pairs_per_caption: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.negative_ratio <= 1.0:
            raise ConfigError(f"negative_ratio must lie in [0, 1], got {self.negative_ratio}")
        if self.max_pairs_per_caption is not None and self.max_pairs_per_caption <= 0:
            raise ConfigError("max_pairs_per_caption must be positive when set")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


def generate(captions, bank: TemplateBank, config: SynthConfig = SynthConfig()) -> list[VqaExample]:
    """Mint QA pairs from captions.

    Per caption and question type, each matched keyword emits one open pair
    (answer: the keyword) and one closed pair.  A closed pair asks about a
    distractor keyword with probability negative_ratio (answer "no"),
    otherwise about the matched keyword (answer "yes").  A distractor is a
    same-type keyword absent from the caption; if none exists the pair
    stays positive.
    """
    rng = np.random.default_rng(config.seed)
    out: list[VqaExample] = []
    for caption in captions:
        per_caption: list[VqaExample] = []
        counters: dict[tuple[str, str], int] = {}
        for q_type in bank.q_types:
            vocabulary = bank.keywords[q_type]
            matched = match_keywords(caption.caption, vocabulary)
            matched_set = set(matched)
            for keyword in matched:
                open_templates = bank.templates.get((q_type, "open"), ())
                closed_templates = bank.templates.get((q_type, "closed"), ())
                if open_templates:
                    pattern = open_templates[int(rng.integers(len(open_templates)))]
                    n = counters.get((q_type, "open"), 0)
                    counters[(q_type, "open")] = n + 1
                    per_caption.append(
                        VqaExample(
                            example_id=f"{caption.caption_id}:{q_type}:open:{n}",
                            image_ref=caption.image_ref,
                            question=pattern,
                            answer=keyword,
                            q_type=q_type,
                            a_type="open",
                        )
                    )
                if closed_templates:
                    negative = bool(rng.random() < config.negative_ratio)
                    slot = keyword
                    answer = "yes"
                    if negative:
                        distractors = [w for w in vocabulary if w not in matched_set]
                        if distractors:
                            slot = distractors[int(rng.integers(len(distractors)))]
                            answer = "no"
                    pattern = closed_templates[int(rng.integers(len(closed_templates)))]
                    n = counters.get((q_type, "closed"), 0)
                    counters[(q_type, "closed")] = n + 1
                    per_caption.append(
                        VqaExample(
                            example_id=f"{caption.caption_id}:{q_type}:closed:{n}",
                            image_ref=caption.image_ref,
                            question=pattern.replace("{}", slot),
                            answer=answer,
                            q_type=q_type,
                            a_type="closed",
                        )
                    )
        if config.max_pairs_per_caption is not None:
            per_caption = per_caption[: config.max_pairs_per_caption]
        out.extend(per_caption)
    return out


def generation_metadata(bank: TemplateBank, config: SynthConfig) -> dict:
    """Provenance record pinning the exact bytes a generation run produces."""
    return {
        "prng": PRNG_ALGORITHM,
        "seed": config.seed,
        "negative_ratio": config.negative_ratio,
        "max_pairs_per_caption": config.max_pairs_per_caption,
        "bank_fingerprint": bank.fingerprint(),
    }
