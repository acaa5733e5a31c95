"""The end-to-end answering pipeline.

Encode the (question, image) pair, retrieve the nearest indexed examples,
vote, render the retrieval hint, assemble the prompt, generate, and map the
generated text onto the evaluation label set.  k=0 skips retrieval
entirely, which is the zero-shot path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .canon import map_to_label
from .datasets import LabelSet
from .errors import DomainError, EmptyRetrievalError
from .gateway import ModelGateway
from .index import Neighbor, RetrievalIndex, top_k
from .prompts import (
    MajorityResult,
    PromptConfig,
    RetrievedVote,
    assemble_prompt,
    instruction_for,
    majority_answer,
    select_quantifier,
)


@dataclass(frozen=True, slots=True)
class AnswerTrace:
    """Every intermediate the pipeline produced for one query.

    neighbors holds (record_id, similarity, answer) triples for the votes
    actually cast, after any self-exclusion.  Retrieval fields are None on
    the zero-shot path.
    """

    question: str
    image_ref: str
    k: int
    neighbors: tuple[tuple[str, float, str], ...]
    majority: MajorityResult | None
    quantifier: str | None
    retrieval_text: str | None
    generated: str
    label: str
    exact: bool

    def to_record(self) -> dict:
        majority = None
        if self.majority is not None:
            majority = {
                "answer": self.majority.answer,
                "frequency": self.majority.frequency,
                "exemplar_id": self.majority.exemplar_id,
            }
        return {
            "question": self.question,
            "image_ref": self.image_ref,
            "k": self.k,
            "neighbors": [
                {"record_id": r, "similarity": s, "answer": a} for r, s, a in self.neighbors
            ],
            "majority": majority,
            "quantifier": self.quantifier,
            "retrieval_text": self.retrieval_text,
            "generated": self.generated,
            "label": self.label,
            "exact": self.exact,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False)


def exclude_self(neighbors, query_id: str | None) -> list[Neighbor]:
    """Drop any neighbor whose record id equals the query's own id.

    Evaluation over a retrieval set that contains the test example itself
    would otherwise let every query vote for its own gold answer.
    """
    if query_id is None:
        return list(neighbors)
    return [n for n in neighbors if n.record_id != query_id]


class AnswerPipeline:
    """Answers questions against a fixed index, gateway, and label set."""

    def __init__(
        self,
        gateway: ModelGateway,
        index: RetrievalIndex | None,
        label_set: LabelSet,
        prompt_config: PromptConfig | None = None,
    ):
        self.gateway = gateway
        self.index = index
        self.label_set = label_set
        self.prompt_config = prompt_config if prompt_config is not None else PromptConfig()

    def retrieve_votes(self, question: str, image_ref: str, k: int, query_id: str | None = None):
        """Encode the pair and fetch the k voting neighbors.

        Over-fetches by one when a query id is given so self-exclusion can
        refill back to k whenever the index is big enough.
        """
        if k < 1:
            raise DomainError(f"retrieval needs k >= 1, got {k}")
        if self.index is None:
            raise EmptyRetrievalError("this pipeline was built without an index")
        query = self.gateway.encode_pair(question, image_ref)
        fetch = k + 1 if query_id is not None else k
        neighbors = exclude_self(top_k(self.index, query, fetch), query_id)[:k]
        return [
            RetrievedVote(neighbor=n, answer=self.index.get(n.record_id).answer)
            for n in neighbors
        ]

    def answer(
        self,
        question: str,
        image_ref: str,
        k: int,
        q_type: str | None = None,
        query_id: str | None = None,
    ) -> AnswerTrace:
        """Run the full pipeline for one query.  k=0 is zero-shot."""
        if k < 0:
            raise DomainError(f"k must be >= 0, got {k}")
        votes = []
        majority = None
        quantifier = None
        retrieval_text = None
        if k >= 1:
            votes = self.retrieve_votes(question, image_ref, k, query_id=query_id)
            if not votes:
                raise EmptyRetrievalError(
                    "self-exclusion left zero votes; the index holds only the query itself"
                )
            majority = majority_answer(votes)
            quantifier = select_quantifier(
                majority.frequency, len(votes), self.prompt_config.scale
            )
            retrieval_text = self.prompt_config.template.render(quantifier, majority.answer)
        image_tokens = self.gateway.encode_image_tokens(image_ref)
        prompt = assemble_prompt(
            image_tokens=image_tokens,
            instruction=instruction_for(q_type),
            question=question,
            retrieval_text=retrieval_text,
            order=self.prompt_config.order,
        )
        generated = self.gateway.generate(prompt).text
        resolved = map_to_label(generated, self.label_set)
        return AnswerTrace(
            question=question,
            image_ref=image_ref,
            k=k,
            neighbors=tuple((v.neighbor.record_id, v.neighbor.similarity, v.answer) for v in votes),
            majority=majority,
            quantifier=quantifier,
            retrieval_text=retrieval_text,
            generated=generated,
            label=resolved.label,
            exact=resolved.exact,
        )

    def knn_label(self, question: str, image_ref: str, k: int, query_id: str | None = None) -> str:
        """Majority vote alone, no generation: the retrieval-only baseline."""
        votes = self.retrieve_votes(question, image_ref, k, query_id=query_id)
        if not votes:
            raise EmptyRetrievalError(
                "self-exclusion left zero votes; the index holds only the query itself"
            )
        return majority_answer(votes).answer
