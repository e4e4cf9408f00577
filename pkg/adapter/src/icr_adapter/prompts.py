"""ICR prompt construction with exact token-span bookkeeping.

Prompt layout: instruction, then the candidate documents in *reversed*
first-stage order (higher-ranked candidates sit closer to the query), then
the query text, or the literal content-free query "N/A" for the
calibration pass.

Segments are tokenized independently and concatenated, never re-tokenized
as one string: that guarantees the document token spans of the real and
null prompts are bit-identical, which the engine's pair validation relies
on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

from attnrank.core import Document, Query

INSTRUCTION = (
    "Read the following passages and judge how relevant each one is to the final query."
)
NULL_QUERY = "N/A"
DEFAULT_ICR_MAX_WORDS = 300


class Tokenizer(Protocol):
    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


def truncate_words(text: str, max_words: int) -> str:
    """Keep the leading whitespace-delimited words."""
    words = text.split()
    return " ".join(words[:max_words])


@dataclass(frozen=True)
class Segment:
    kind: str  # "instruction" | "document" | "query"
    ref: str  # doc id for documents, "" otherwise
    token_ids: tuple[int, ...]
    start: int
    end: int


@dataclass(frozen=True)
class PromptPlan:
    query_id: str
    segments: tuple[Segment, ...]
    null: bool
    max_words: int

    @property
    def token_ids(self) -> list[int]:
        return [t for seg in self.segments for t in seg.token_ids]

    @property
    def doc_spans(self) -> dict[str, tuple[int, int]]:
        return {s.ref: (s.start, s.end) for s in self.segments if s.kind == "document"}

    @property
    def doc_ids(self) -> tuple[str, ...]:
        """Document ids in first-stage (candidate) order."""
        in_prompt = [s.ref for s in self.segments if s.kind == "document"]
        return tuple(reversed(in_prompt))

    @property
    def query_span(self) -> tuple[int, int]:
        (seg,) = [s for s in self.segments if s.kind == "query"]
        return seg.start, seg.end

    def __post_init__(self) -> None:
        cursor = 0
        for seg in self.segments:
            if seg.start != cursor or seg.end != seg.start + len(seg.token_ids):
                raise ValueError("segment spans must be contiguous and ordered")
            cursor = seg.end


def build_icr_prompt(
    query: Query,
    pool: list[Document],
    null: bool,
    max_words: int = DEFAULT_ICR_MAX_WORDS,
    tokenizer: Tokenizer | None = None,
    max_tokens: int | None = None,
) -> PromptPlan:
    """Tokenized prompt plan for one scoring forward pass.

    ``null=True`` swaps the query text for the content-free "N/A"; nothing
    else changes, so the two plans differ only in the final segment.
    """
    if not pool:
        raise ValueError("empty candidate pool")
    if tokenizer is None:
        raise ValueError("a tokenizer is required to build a prompt plan")

    segments: list[Segment] = []
    cursor = 0

    def push(kind: str, ref: str, text: str) -> None:
        nonlocal cursor
        ids = tuple(tokenizer.encode(text))
        segments.append(Segment(kind, ref, ids, cursor, cursor + len(ids)))
        cursor += len(ids)

    push("instruction", "", INSTRUCTION)
    for doc in sorted(pool, key=lambda d: -d.initial_rank):  # reversed candidate order
        push("document", doc.id, truncate_words(doc.text, max_words))
    push("query", "", NULL_QUERY if null else query.text)

    if max_tokens is not None and cursor > max_tokens:
        raise ValueError(
            f"prompt needs {cursor} tokens but the model budget is {max_tokens}"
        )
    return PromptPlan(
        query_id=query.id, segments=tuple(segments), null=null, max_words=max_words
    )
