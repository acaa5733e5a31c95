"""Free-text answer canonicalization.

A generator emits unconstrained text; evaluation needs a label from a fixed
set.  The mapping rule is: exact match after normalization wins outright,
otherwise the label sharing the longest common contiguous substring with the
generated text wins.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyLabelSetError

_TERMINAL_PUNCTUATION = ".!?"


def normalize(text: str) -> str:
    """Lowercase, collapse whitespace runs, strip terminal sentence punctuation.

    Idempotent: normalize(normalize(x)) == normalize(x).  Stripping runs to
    a fixed point because removing punctuation can expose trailing spaces
    and vice versa.
    """
    out = " ".join(text.lower().split())
    while True:
        stripped = out.rstrip(_TERMINAL_PUNCTUATION).rstrip()
        if stripped == out:
            return out
        out = stripped


def lcs_length(a: str, b: str) -> tuple[int, str]:
    """Length and text of the longest common contiguous substring of a and b.

    Ties are broken by the leftmost occurrence in a.  Either input empty
    gives (0, "").
    """
    if not a or not b:
        return 0, ""
    # Rolling DP row: row[j] = length of the common suffix of a[:i+1] and b[:j+1].
    best_len = 0
    best_start = 0
    row = [0] * len(b)
    for i, ch_a in enumerate(a):
        prev_diag = 0
        for j, ch_b in enumerate(b):
            current = row[j]
            if ch_a == ch_b:
                row[j] = prev_diag + 1
                # Strict improvement only, so the first (leftmost in a) run
                # of a given length is the one kept.
                if row[j] > best_len:
                    best_len = row[j]
                    best_start = i - row[j] + 1
            else:
                row[j] = 0
            prev_diag = current
    return best_len, a[best_start : best_start + best_len]


@dataclass(frozen=True, slots=True)
class CanonAnswer:
    """A generated answer resolved to a label from a closed set."""

    label: str
    score: int
    exact: bool


def map_to_label(generated: str, labels) -> CanonAnswer:
    """Resolve generated free text to the best label in an ordered label set.

    The generated text is normalized first; labels are assumed normalized
    already.  An exact match dominates every substring match.  Otherwise the
    label with the longest common contiguous substring wins; ties fall to the
    higher match-length / label-length ratio, then to label-set order.
    """
    ordered = list(labels)
    if not ordered:
        raise EmptyLabelSetError("cannot map an answer against zero labels")
    text = normalize(generated)
    if text in ordered:
        return CanonAnswer(label=text, score=len(text), exact=True)
    best_label = ordered[0]
    best_key = (-1, -1.0)
    for label in ordered:
        length, _ = lcs_length(text, label)
        ratio = length / len(label) if label else 0.0
        key = (length, ratio)
        if key > best_key:
            best_key = key
            best_label = label
    return CanonAnswer(label=best_label, score=best_key[0], exact=False)
