"""Exact cosine retrieval over multimodal embedding keys.

The index is a flat store: similarity search scans every record, so results
are exact by construction.  Keys are stored as 32-bit floats; similarity is
accumulated in 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .canon import normalize
from .errors import (
    DimensionError,
    DomainError,
    DuplicateIdError,
    EmptyIndexError,
    ZeroNormError,
)


def _as_f32_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float32)
    if vec.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {vec.shape}")
    if vec.size == 0:
        raise DimensionError("embedding dimension must be positive")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding values must be finite")
    return vec


@dataclass(frozen=True, slots=True, eq=False)
class Embedding:
    """A fixed-width key vector.  Values are stored as 32-bit floats."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_f32_vector(self.values))

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, slots=True)
class RetrievalRecord:
    """One indexed example: a key vector plus the fields voting needs.

    The answer is normalized at construction so every vote downstream
    compares canonical strings.
    """

    record_id: str
    answer: str
    q_type: str
    a_type: str
    key: Embedding

    def __post_init__(self):
        if not self.record_id:
            raise ValueError("record_id must be nonempty")
        if self.a_type not in ("open", "closed"):
            raise ValueError(f"a_type must be 'open' or 'closed', got {self.a_type!r}")
        object.__setattr__(self, "answer", normalize(self.answer))
        if not self.answer:
            raise ValueError("answer must be nonempty after normalization")


@dataclass(frozen=True, slots=True)
class Neighbor:
    """One retrieval hit: the record id and its cosine similarity."""

    record_id: str
    similarity: float


def cosine_similarity(a: Embedding, b: Embedding) -> float:
    """Cosine of the angle between two embeddings, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    norm_a = float(np.sqrt(av @ av))
    norm_b = float(np.sqrt(bv @ bv))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroNormError("cosine similarity is undefined for zero vectors")
    return float(np.clip((av @ bv) / (norm_a * norm_b), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    """An immutable flat index over retrieval records.

    Construction precomputes the stacked key matrix and per-record norms so
    queries are a single matrix-vector product.
    """

    dim: int
    records: tuple[RetrievalRecord, ...]
    _keys: np.ndarray = field(repr=False)
    _norms: np.ndarray = field(repr=False)
    _by_id: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, record_id: str) -> RetrievalRecord:
        return self._by_id[record_id]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id


def build_index(records, dim: int) -> RetrievalIndex:
    """Validate records and build an immutable index of the given dimension.

    Rejects dimension mismatches, duplicate ids, and zero-norm keys; an
    index must never hold a record that cannot participate in a query.
    """
    if dim <= 0:
        raise DimensionError("index dimension must be positive")
    ordered = tuple(records)
    by_id: dict[str, RetrievalRecord] = {}
    for record in ordered:
        if record.key.dim != dim:
            raise DimensionError(
                f"record {record.record_id!r} has dim {record.key.dim}, index wants {dim}"
            )
        if record.record_id in by_id:
            raise DuplicateIdError(f"duplicate record id {record.record_id!r}")
        by_id[record.record_id] = record
    if ordered:
        keys = np.stack([r.key.values for r in ordered]).astype(np.float64)
        norms = np.sqrt((keys * keys).sum(axis=1))
        if np.any(norms == 0.0):
            bad = ordered[int(np.argmin(norms))].record_id
            raise ZeroNormError(f"record {bad!r} has a zero-norm key")
    else:
        keys = np.zeros((0, dim), dtype=np.float64)
        norms = np.zeros((0,), dtype=np.float64)
    return RetrievalIndex(dim=dim, records=ordered, _keys=keys, _norms=norms, _by_id=by_id)


def top_k(index: RetrievalIndex, query: Embedding, k: int) -> list[Neighbor]:
    """The k records most similar to the query, exactly.

    Ordered by similarity descending, ties by ascending record id.  Returns
    min(k, len(index)) neighbors.
    """
    if k <= 0:
        raise DomainError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        raise EmptyIndexError("cannot query an empty index")
    if query.dim != index.dim:
        raise DimensionError(f"query dim {query.dim} does not match index dim {index.dim}")
    qv = query.values.astype(np.float64)
    q_norm = float(np.sqrt(qv @ qv))
    if q_norm == 0.0:
        raise ZeroNormError("cannot query with a zero-norm embedding")
    sims = np.clip((index._keys @ qv) / (index._norms * q_norm), -1.0, 1.0)
    ranked = sorted(
        (Neighbor(record_id=r.record_id, similarity=float(s)) for r, s in zip(index.records, sims)),
        key=lambda n: (-n.similarity, n.record_id),
    )
    return ranked[: min(k, len(index))]
