"""Shared domain types and the deterministic tie-breaking rank primitive.

Everything here is an immutable value; every operation is a pure function,
so per-query work can run in parallel with no shared state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Document:
    """One first-stage candidate.

    ``initial_rank`` is the 0-based position in the first-stage list; it is
    the deterministic tie-breaker everywhere in the engine.  ``text`` may be
    empty at engine level (tokenization belongs to the adapter).
    """

    id: str
    text: str = ""
    initial_rank: int = 0


@dataclass(frozen=True)
class Query:
    id: str
    text: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("query id must be non-empty")


@dataclass(frozen=True)
class LayerInterval:
    """Inclusive layer index range [lo, hi], 0-based."""

    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 0 or self.lo > self.hi:
            raise ValueError(f"invalid layer interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


@dataclass(frozen=True)
class RankedList:
    """Ordered (doc_id, score) entries for one query, best first.

    Entries must be sorted by score descending and doc ids unique; the
    initial-rank tie-break is enforced by construction through
    :func:`stable_rank`, not re-checked here (scores alone cannot tell).
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    method_tag: str = ""

    def __post_init__(self) -> None:
        ids = [d for d, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate doc_id in ranked list")
        scores = [s for _, s in self.entries]
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise ValueError("ranked list scores must be non-increasing")

    @property
    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class RelevanceJudgments:
    """Graded qrels: (query_id, doc_id) -> integer grade, unjudged = 0."""

    grades: dict[tuple[str, str], int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for key, g in self.grades.items():
            if g < 0:
                raise ValueError(f"negative grade for {key}")

    def grade(self, query_id: str, doc_id: str) -> int:
        return self.grades.get((query_id, doc_id), 0)

    def judged_grades(self, query_id: str) -> list[int]:
        return [g for (q, _), g in self.grades.items() if q == query_id]

    def query_ids(self) -> set[str]:
        return {q for q, _ in self.grades}


def stable_rank(query_id: str, scores: dict[str, float], pool: list[Document],
                method_tag: str = "") -> RankedList:
    """Sort a pool by score descending, ties by ascending initial_rank.

    Under an all-tie score map this reproduces the first-stage order, which
    is what makes the calibration-identity check meaningful downstream.
    """
    for doc in pool:
        if doc.id not in scores:
            raise ValueError(f"missing score for pool document {doc.id!r}")
        if not math.isfinite(scores[doc.id]):
            raise ValueError(f"non-finite score for document {doc.id!r}: {scores[doc.id]!r}")
    ordered = sorted(pool, key=lambda d: (-scores[d.id], d.initial_rank))
    return RankedList(
        query_id=query_id,
        entries=tuple((d.id, float(scores[d.id])) for d in ordered),
        method_tag=method_tag,
    )
