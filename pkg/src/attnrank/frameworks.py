"""Ranking strategies over pluggable scorers: listwise and setwise.

Three families:

* listwise single-shot: one scorer call over the whole pool;
* listwise sliding window: bottom-up window passes so strong documents can
  migrate from tail to head;
* setwise heapsort / bubblesort: tournament selection of the top-k where
  one oracle call names the most relevant document among <= c candidates.

Every run returns exact cost accounting.  A calibrated-attention oracle
burns two forward passes per call (real + content-free prompt), which is
the structural reason setwise internal-attention runs are slow; the stats
reproduce that arithmetic instead of hiding it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

from attnrank.core import Document, Query, RankedList


@dataclass(frozen=True)
class ListScorer:
    """Callable contract: (query, documents) -> score per given doc id."""

    fn: Callable[[Query, list[Document]], dict[str, float]]
    forward_passes_per_call: int = 1
    name: str = "scorer"


@dataclass(frozen=True)
class SetOracle:
    """Callable contract: (query, window of <= c documents) -> winner index."""

    fn: Callable[[Query, list[Document]], int]
    forward_passes_per_call: int = 1
    name: str = "oracle"


@dataclass
class ComparisonStats:
    oracle_calls: int = 0
    forward_passes: int = 0
    docs_touched: int = 0
    wall_time: float | None = None

    def _record(self, window_size: int, passes_per_call: int) -> None:
        self.oracle_calls += 1
        self.forward_passes += passes_per_call
        self.docs_touched += window_size


def heapsort_call_bound(n: int, c: int, k: int) -> int:
    """Stated oracle-call ceiling: linear heapify plus k log-depth sifts.

    c = 2 degenerates to pairwise comparisons on a binary heap, which costs
    at most two calls per sift level instead of one.
    """
    if n <= 1:
        return 0
    per_level = 1 if c >= 3 else 2
    return per_level * (n + k * math.ceil(math.log2(n)))


def bubblesort_call_bound(n: int, c: int, k: int) -> int:
    """Stated ceiling k * ceil((N-1)/(c-1)): one window sweep per pass."""
    if n <= 1:
        return 0
    return k * math.ceil((n - 1) / (c - 1))


def _ordinal_list(query_id: str, docs: list[Document], method_tag: str) -> RankedList:
    # Setwise/sliding runs produce an order, not scores; emit ordinal scores.
    n = len(docs)
    return RankedList(
        query_id=query_id,
        entries=tuple((d.id, float(n - i)) for i, d in enumerate(docs)),
        method_tag=method_tag,
    )


def _by_initial_rank(pool: list[Document]) -> list[Document]:
    return sorted(pool, key=lambda d: d.initial_rank)


def _call_scorer(
    scorer: ListScorer, query: Query, docs: list[Document], stats: ComparisonStats
) -> dict[str, float]:
    scores = scorer.fn(query, docs)
    expected = {d.id for d in docs}
    if set(scores) != expected:
        raise ValueError(
            f"scorer {scorer.name!r} returned wrong doc set: "
            f"missing {sorted(expected - set(scores))}, extra {sorted(set(scores) - expected)}"
        )
    if any(not math.isfinite(v) for v in scores.values()):
        raise ValueError(f"scorer {scorer.name!r} returned non-finite score")
    stats._record(len(docs), scorer.forward_passes_per_call)
    return scores


def _call_oracle(
    oracle: SetOracle, query: Query, window: list[Document], stats: ComparisonStats
) -> int:
    winner = oracle.fn(query, window)
    if not isinstance(winner, int) or not 0 <= winner < len(window):
        raise ValueError(
            f"oracle {oracle.name!r} returned out-of-bounds index {winner!r} "
            f"for window of {len(window)}"
        )
    stats._record(len(window), oracle.forward_passes_per_call)
    return winner


def listwise_single(
    query: Query, pool: list[Document], scorer: ListScorer
) -> tuple[RankedList, ComparisonStats]:
    """Whole pool in one context: a single scorer call, then a stable sort."""
    if not pool:
        raise ValueError("empty pool")
    t0 = time.perf_counter()
    stats = ComparisonStats()
    docs = _by_initial_rank(pool)
    scores = _call_scorer(scorer, query, docs, stats)
    from attnrank.core import stable_rank

    ranked = stable_rank(
        query.id, scores, docs, method_tag=f"{scorer.name}|listwise-single"
    )
    stats.wall_time = time.perf_counter() - t0
    return ranked, stats


def listwise_sliding(
    query: Query,
    pool: list[Document],
    scorer: ListScorer,
    ws: int,
    step: int,
) -> tuple[RankedList, ComparisonStats]:
    """One bottom-up pass of overlapping windows from the list tail.

    Each window is re-ranked in place by one scorer call; the window start
    moves up by ``step`` and clamps to 0 so the head is re-ranked exactly
    once.  Total calls: ceil((N - ws) / step) + 1.
    """
    n = len(pool)
    if not 1 <= step < ws <= n:
        raise ValueError(f"need 1 <= step < ws <= N, got step={step} ws={ws} N={n}")
    if ws == n:
        ranked, stats = listwise_single(query, pool, scorer)
        ranked = RankedList(ranked.query_id, ranked.entries,
                            method_tag=f"{scorer.name}|listwise-sliding:ws={ws},step={step}")
        return ranked, stats
    t0 = time.perf_counter()
    stats = ComparisonStats()
    current = _by_initial_rank(pool)
    start = n - ws
    while True:
        window = current[start : start + ws]
        scores = _call_scorer(scorer, query, window, stats)
        # Stable within the window: ties keep their current relative order.
        window.sort(key=lambda d: -scores[d.id])
        current[start : start + ws] = window
        if start == 0:
            break
        start = max(0, start - step)
    ranked = _ordinal_list(
        query.id, current, method_tag=f"{scorer.name}|listwise-sliding:ws={ws},step={step}"
    )
    stats.wall_time = time.perf_counter() - t0
    return ranked, stats


def setwise_heapsort(
    query: Query,
    pool: list[Document],
    oracle: SetOracle,
    c: int,
    k: int,
) -> tuple[RankedList, ComparisonStats]:
    """Top-k selection on a max-heap of arity c-1.

    Each sift-down step presents one parent plus its children (a set of at
    most c documents) and the oracle names the winner; heapify then k
    extract-max rounds.  For c = 2 the heap is binary and each sift level
    spends up to two pairwise calls (child vs child, then winner vs parent).
    Documents beyond rank k keep their first-stage order.
    """
    n = len(pool)
    if c < 2:
        raise ValueError("set size c must be >= 2")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k} N={n}")
    t0 = time.perf_counter()
    stats = ComparisonStats()
    heap = _by_initial_rank(pool)
    size = n
    arity = c - 1 if c >= 3 else 2
    pairwise = c == 2

    def sift_down(i: int) -> None:
        while True:
            first = arity * i + 1
            if first >= size:
                return
            child_idx = list(range(first, min(first + arity, size)))
            if pairwise:
                best = child_idx[0]
                if len(child_idx) == 2:
                    w = _call_oracle(oracle, query, [heap[child_idx[0]], heap[child_idx[1]]], stats)
                    best = child_idx[w]
                w = _call_oracle(oracle, query, [heap[i], heap[best]], stats)
                if w == 0:
                    return
                target = best
            else:
                positions = [i] + child_idx
                w = _call_oracle(oracle, query, [heap[p] for p in positions], stats)
                target = positions[w]
                if target == i:
                    return
            heap[i], heap[target] = heap[target], heap[i]
            i = target

    last_parent = (size - 2) // arity if size > 1 else -1
    for i in range(last_parent, -1, -1):
        sift_down(i)

    top: list[Document] = []
    for j in range(k):
        if size == 0:
            break
        top.append(heap[0])
        size -= 1
        if size > 0:
            heap[0] = heap[size]
            if j < k - 1:
                # The restore sift is pointless after the last extraction.
                sift_down(0)

    rest = _by_initial_rank(heap[:size])
    ranked = _ordinal_list(
        query.id, top + rest, method_tag=f"{oracle.name}|heapsort:c={c},k={k}"
    )
    stats.wall_time = time.perf_counter() - t0
    return ranked, stats


def setwise_bubblesort(
    query: Query,
    pool: list[Document],
    oracle: SetOracle,
    c: int,
    k: int,
) -> tuple[RankedList, ComparisonStats]:
    """k bubble passes of c-wide windows sliding from the tail upward.

    Within a pass the oracle's winner is promoted to the window head and
    carried into the next window, so after pass i position i holds the
    certified i-th best document.  Costs at most ceil((N-1-i)/(c-1)) calls
    per pass.
    """
    n = len(pool)
    if c < 2:
        raise ValueError("set size c must be >= 2")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= N, got k={k} N={n}")
    t0 = time.perf_counter()
    stats = ComparisonStats()
    current = _by_initial_rank(pool)
    for i in range(k):
        if n - i < 2:
            break
        hi = n - 1
        lo = max(i, hi - (c - 1))
        while True:
            window = current[lo : hi + 1]
            if len(window) >= 2:
                w = _call_oracle(oracle, query, window, stats)
                # Promote the winner to the window head; losers keep order.
                current[lo : lo + w + 1] = [current[lo + w]] + current[lo : lo + w]
            if lo == i:
                break
            hi = lo
            lo = max(i, hi - (c - 1))
    ranked = _ordinal_list(
        query.id, current, method_tag=f"{oracle.name}|bubblesort:c={c},k={k}"
    )
    stats.wall_time = time.perf_counter() - t0
    return ranked, stats
