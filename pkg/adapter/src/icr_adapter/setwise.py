"""Setwise answering: pick the most relevant document from a small set.

The prompt follows the labeled-passage template family: numbered passages,
then a question asking for the single most relevant label.  Likelihood mode
reads the label-token logits of one forward pass; generation mode decodes
greedily and parses the emitted label.  Both are deterministic for a fixed
model and inputs.
"""

from __future__ import annotations

import re

import torch

from attnrank.core import Document, Query

from icr_adapter.runtime import ModelRuntime

SETWISE_MAX_TOKENS_PER_DOC = 128
_LABEL_RE = re.compile(r"\b(\d{1,2})\b")


def _setwise_prompt(runtime: ModelRuntime, query: Query, docs: list[Document]) -> list[int]:
    tok = runtime.tokenizer
    ids: list[int] = []
    ids += tok.encode("Given the query:")
    ids += tok.encode(query.text)
    ids += tok.encode("which of the following passages is the most relevant?")
    for i, doc in enumerate(docs, start=1):
        ids += tok.encode(f"Passage {i} :")
        ids += tok.encode(doc.text)[:SETWISE_MAX_TOKENS_PER_DOC]
    ids += tok.encode("Answer with the passage number only. Answer : Passage")
    return ids


def _label_token_ids(runtime: ModelRuntime, count: int) -> list[int]:
    out = []
    for i in range(1, count + 1):
        ids = runtime.tokenizer.encode(str(i))
        if len(ids) != 1:
            raise ValueError(f"label {i!r} does not tokenize to a single token")
        out.append(ids[0])
    return out


def setwise_answer(
    runtime: ModelRuntime,
    query: Query,
    docs: list[Document],
    mode: str,
) -> tuple[int, dict[int, float] | None]:
    """(winner index, label distribution) for likelihood; (winner, None) for generation."""
    if not docs:
        raise ValueError("empty document set")
    if mode not in ("likelihood", "generation"):
        raise ValueError(f"unknown setwise mode {mode!r}")
    prompt = _setwise_prompt(runtime, query, docs)
    ids = torch.tensor([prompt], dtype=torch.long)

    if mode == "likelihood":
        labels = _label_token_ids(runtime, len(docs))
        with torch.no_grad():
            out = runtime.model(ids, use_cache=False)
        logits = out.logits[0, -1, labels]
        probs = torch.softmax(logits.double(), dim=-1)
        winner = int(torch.argmax(probs).item())
        distribution = {i: float(p) for i, p in enumerate(probs.tolist())}
        return winner, distribution

    with torch.no_grad():
        generated = runtime.model.generate(
            ids,
            max_new_tokens=4,
            do_sample=False,  # greedy: the oracle must be a function
            pad_token_id=0,
        )
    text = runtime.tokenizer.decode(generated[0, ids.shape[1]:].tolist())
    winner = parse_label(text, len(docs))
    return winner, None


def parse_label(text: str, count: int) -> int:
    """First in-range passage number in the decoded text, as a 0-based index."""
    for match in _LABEL_RE.finditer(text):
        value = int(match.group(1))
        if 1 <= value <= count:
            return value - 1
    raise ValueError(f"unparseable oracle output: {text!r}")


def score_list(
    runtime: ModelRuntime,
    query: Query,
    docs: list[Document],
    mode: str,
) -> dict[str, float]:
    """Listwise scores: label probabilities (likelihood) or parsed rank order
    (generation; unparsed documents keep their given order below the parsed)."""
    if mode == "likelihood":
        _, distribution = setwise_answer(runtime, query, docs, "likelihood")
        assert distribution is not None
        return {doc.id: distribution[i] for i, doc in enumerate(docs)}
    if mode != "generation":
        raise ValueError(f"unknown listwise mode {mode!r}")
    prompt = _setwise_prompt(runtime, query, docs)
    ids = torch.tensor([prompt], dtype=torch.long)
    with torch.no_grad():
        generated = runtime.model.generate(
            ids, max_new_tokens=4 * len(docs), do_sample=False, pad_token_id=0
        )
    text = runtime.tokenizer.decode(generated[0, ids.shape[1]:].tolist())
    order: list[int] = []
    for match in _LABEL_RE.finditer(text):
        value = int(match.group(1))
        if 1 <= value <= len(docs) and value - 1 not in order:
            order.append(value - 1)
    if not order:
        raise ValueError(f"unparseable oracle output: {text!r}")
    scores = {}
    next_score = float(len(docs))
    for idx in order:
        scores[docs[idx].id] = next_score
        next_score -= 1.0
    for doc in docs:
        if doc.id not in scores:
            scores[doc.id] = next_score
            next_score -= 1.0
    return scores
