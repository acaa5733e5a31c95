"""Dataset records, line-delimited JSON IO, and the binary index file format.

Datasets are UTF-8 JSON lines.  A VQA line carries id, image_ref, question,
answer, q_type, a_type; a caption line carries id, image_ref, caption.
Index files are a little-endian binary format with magic "MPR1" that
round-trips byte-identically.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .canon import normalize
from .errors import (
    DuplicateIdError,
    EmptyDatasetError,
    FormatError,
    ParseError,
)
from .index import Embedding, RetrievalIndex, RetrievalRecord, build_index

INDEX_MAGIC = b"MPR1"
INDEX_VERSION = 1

DEFAULT_CLOSED_VOCAB = ("yes", "no")

_A_TYPES = ("open", "closed")


@dataclass(frozen=True, slots=True)
class VqaExample:
    """One question over one image, with its gold answer.

    The answer is normalized at construction; the question is kept verbatim
    because prompt text is the model's business, not ours.
    """

    example_id: str
    image_ref: str
    question: str
    answer: str
    q_type: str
    a_type: str

    def __post_init__(self):
        if not self.example_id:
            raise ValueError("example_id must be nonempty")
        if self.a_type not in _A_TYPES:
            raise ValueError(f"a_type must be 'open' or 'closed', got {self.a_type!r}")
        object.__setattr__(self, "answer", normalize(self.answer))
        if not self.answer:
            raise ValueError("answer must be nonempty after normalization")


@dataclass(frozen=True, slots=True)
class CaptionExample:
    """One image paired with a free-text caption."""

    caption_id: str
    image_ref: str
    caption: str

    def __post_init__(self):
        if not self.caption_id:
            raise ValueError("caption_id must be nonempty")


class LabelSet:
    """Insertion-ordered set of normalized labels, no duplicates."""

    def __init__(self, labels=()):
        seen: dict[str, None] = {}
        for label in labels:
            canonical = normalize(label)
            if canonical and canonical not in seen:
                seen[canonical] = None
        self._labels: tuple[str, ...] = tuple(seen)

    def __iter__(self):
        return iter(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._labels

    def __eq__(self, other) -> bool:
        if isinstance(other, LabelSet):
            return self._labels == other._labels
        return NotImplemented

    def __repr__(self) -> str:
        return f"LabelSet({list(self._labels)!r})"

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels


@dataclass(frozen=True, slots=True)
class DatasetSplit:
    """Train/validation/test partitions with ids unique across the split."""

    train: tuple[VqaExample, ...]
    validation: tuple[VqaExample, ...]
    test: tuple[VqaExample, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for part in (self.train, self.validation, self.test):
            for example in part:
                if example.example_id in seen:
                    raise DuplicateIdError(f"duplicate example id {example.example_id!r}")
                seen.add(example.example_id)


def _parse_line(raw: str, line_number: int, required: dict[str, type]) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line_number) from exc
    if not isinstance(record, dict):
        raise ParseError("expected a JSON object", line_number)
    for name, kind in required.items():
        if name not in record:
            raise ParseError(f"missing field {name!r}", line_number)
        if not isinstance(record[name], kind):
            raise ParseError(f"field {name!r} must be a {kind.__name__}", line_number)
    return record


def load_vqa(path, closed_vocab=DEFAULT_CLOSED_VOCAB) -> list[VqaExample]:
    """Load a line-delimited VQA dataset.

    Closed answers must fall in closed_vocab after normalization; pass
    closed_vocab=None to skip that check.  Malformed lines raise ParseError
    with their line number, duplicate ids raise DuplicateIdError.
    """
    fields = {
        "id": str,
        "image_ref": str,
        "question": str,
        "answer": str,
        "q_type": str,
        "a_type": str,
    }
    vocab = None if closed_vocab is None else {normalize(v) for v in closed_vocab}
    examples: list[VqaExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, 1):
            raw = raw.strip()
            if not raw:
                continue
            record = _parse_line(raw, line_number, fields)
            if record["a_type"] not in _A_TYPES:
                raise ParseError(
                    f"a_type must be 'open' or 'closed', got {record['a_type']!r}", line_number
                )
            if not record["answer"].strip():
                raise ParseError("answer must be nonempty", line_number)
            if record["id"] in seen:
                raise DuplicateIdError(f"line {line_number}: duplicate id {record['id']!r}")
            seen.add(record["id"])
            example = VqaExample(
                example_id=record["id"],
                image_ref=record["image_ref"],
                question=record["question"],
                answer=record["answer"],
                q_type=record["q_type"],
                a_type=record["a_type"],
            )
            if vocab is not None and example.a_type == "closed" and example.answer not in vocab:
                raise ParseError(
                    f"closed answer {example.answer!r} is outside the closed vocabulary",
                    line_number,
                )
            examples.append(example)
    return examples


def save_vqa(examples, path) -> None:
    """Write VQA examples as JSON lines.  load_vqa(save_vqa(x)) == x."""
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(
                json.dumps(
                    {
                        "id": example.example_id,
                        "image_ref": example.image_ref,
                        "question": example.question,
                        "answer": example.answer,
                        "q_type": example.q_type,
                        "a_type": example.a_type,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_captions(path) -> list[CaptionExample]:
    """Load a line-delimited caption dataset."""
    fields = {"id": str, "image_ref": str, "caption": str}
    captions: list[CaptionExample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, 1):
            raw = raw.strip()
            if not raw:
                continue
            record = _parse_line(raw, line_number, fields)
            if record["id"] in seen:
                raise DuplicateIdError(f"line {line_number}: duplicate id {record['id']!r}")
            seen.add(record["id"])
            captions.append(
                CaptionExample(
                    caption_id=record["id"],
                    image_ref=record["image_ref"],
                    caption=record["caption"],
                )
            )
    return captions


def save_captions(captions, path) -> None:
    """Write caption examples as JSON lines."""
    with open(path, "w", encoding="utf-8") as handle:
        for item in captions:
            handle.write(
                json.dumps(
                    {"id": item.caption_id, "image_ref": item.image_ref, "caption": item.caption},
                    ensure_ascii=False,
                )
                + "\n"
            )


def extract_label_set(examples) -> LabelSet:
    """Deduplicated normalized answers in first-occurrence order."""
    ordered = list(examples)
    if not ordered:
        raise EmptyDatasetError("cannot extract labels from an empty dataset")
    return LabelSet(example.answer for example in ordered)


# --- binary index format -------------------------------------------------
#
# magic "MPR1" | u32 version | u32 dim | u32 record count
# per record: u32 id length, id bytes (UTF-8), u32 answer length, answer
# bytes, u32 q_type length, q_type bytes, u8 a_type (0 open / 1 closed),
# dim float32 key values.  All integers and floats little-endian.


def _pack_str(value: str) -> bytes:
    data = value.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def save_index(index: RetrievalIndex, path) -> None:
    """Serialize an index to its binary file format."""
    buffer = io.BytesIO()
    buffer.write(INDEX_MAGIC)
    buffer.write(struct.pack("<III", INDEX_VERSION, index.dim, len(index)))
    for record in index.records:
        buffer.write(_pack_str(record.record_id))
        buffer.write(_pack_str(record.answer))
        buffer.write(_pack_str(record.q_type))
        buffer.write(struct.pack("<B", 0 if record.a_type == "open" else 1))
        buffer.write(record.key.values.astype("<f4").tobytes())
    Path(path).write_bytes(buffer.getvalue())


class _Reader:
    """Cursor over the raw bytes that raises FormatError on truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int) -> bytes:
        if self.offset + count > len(self.data):
            raise FormatError("index file is truncated")
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def text(self) -> str:
        length = self.u32()
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("index file holds invalid UTF-8") from exc


def load_index(path) -> RetrievalIndex:
    """Deserialize a binary index file.  Corruption raises FormatError."""
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != INDEX_MAGIC:
        raise FormatError("not an index file: bad magic")
    version = reader.u32()
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")
    dim = reader.u32()
    if dim <= 0:
        raise FormatError("index dimension must be positive")
    count = reader.u32()
    records = []
    for _ in range(count):
        record_id = reader.text()
        answer = reader.text()
        q_type = reader.text()
        a_type_code = reader.u8()
        if a_type_code not in (0, 1):
            raise FormatError(f"invalid a_type code {a_type_code}")
        values = np.frombuffer(reader.take(4 * dim), dtype="<f4")
        try:
            records.append(
                RetrievalRecord(
                    record_id=record_id,
                    answer=answer,
                    q_type=q_type,
                    a_type="open" if a_type_code == 0 else "closed",
                    key=Embedding(values),
                )
            )
        except ValueError as exc:
            raise FormatError(f"invalid record in index file: {exc}") from exc
    if reader.offset != len(reader.data):
        raise FormatError("trailing bytes after the last record")
    return build_index(records, dim)
