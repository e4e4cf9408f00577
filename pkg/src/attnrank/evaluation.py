"""TREC-style evaluation: qrels parsing, nDCG@k, run files, latency reports.

nDCG uses linear gain (grade / log2(rank+1)) to match the convention of the
re-ranking literature; exponential gain (2^grade - 1) is available behind a
flag.  IDCG is computed from all judged documents for the query, and queries
with no relevant judged document score 0 by convention.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

from attnrank.core import RankedList, RelevanceJudgments

logger = logging.getLogger(__name__)

LATENCY_STAGES = ("forward_pass", "total_scoring")


@dataclass(frozen=True)
class LatencySample:
    query_id: str
    stage: str
    seconds: float
    config_tag: str

    def __post_init__(self) -> None:
        if self.stage not in LATENCY_STAGES:
            raise ValueError(f"unknown latency stage {self.stage!r}")
        if not self.seconds > 0:
            raise ValueError("latency seconds must be positive")


def parse_qrels(text: str) -> RelevanceJudgments:
    """Parse whitespace-separated 'query_id iteration doc_id grade' lines.

    Duplicate (query, doc) pairs keep the last grade, with a warning.
    """
    grades: dict[tuple[str, str], int] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"qrels line {lineno}: expected 4 fields, got {len(parts)}")
        query_id, _iteration, doc_id, grade_str = parts
        try:
            grade = int(grade_str)
        except ValueError:
            raise ValueError(f"qrels line {lineno}: non-integer grade {grade_str!r}") from None
        if grade < 0:
            raise ValueError(f"qrels line {lineno}: negative grade {grade}")
        key = (query_id, doc_id)
        if key in grades:
            logger.warning("duplicate qrels pair %s, keeping last grade", key)
        grades[key] = grade
    return RelevanceJudgments(grades=grades)


def _dcg(gains: list[float]) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


def ndcg_at_k(
    ranked: RankedList,
    qrels: RelevanceJudgments,
    k: int,
    gain: str = "linear",
) -> float:
    """nDCG@k of a ranked list; reads only the order, never the scores."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if gain not in ("linear", "exp"):
        raise ValueError(f"unknown gain function {gain!r}")

    def g(grade: int) -> float:
        return float(grade) if gain == "linear" else float(2**grade - 1)

    gains = [g(qrels.grade(ranked.query_id, d)) for d in ranked.doc_ids[:k]]
    ideal = sorted((g(x) for x in qrels.judged_grades(ranked.query_id)), reverse=True)[:k]
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return 0.0
    return _dcg(gains) / idcg


def mean_ndcg_at_k(
    ranked_lists: list[RankedList],
    qrels: RelevanceJudgments,
    k: int,
    gain: str = "linear",
) -> float:
    if not ranked_lists:
        raise ValueError("no ranked lists to evaluate")
    return sum(ndcg_at_k(r, qrels, k, gain) for r in ranked_lists) / len(ranked_lists)


def emit_run(ranked_lists: list[RankedList], tag: str) -> str:
    """Render TREC run lines: query_id Q0 doc_id rank score tag."""
    if not ranked_lists:
        raise ValueError("no ranked lists to emit")
    lines = []
    for ranked in ranked_lists:
        seen: set[str] = set()
        for rank, (doc_id, score) in enumerate(ranked.entries, start=1):
            if doc_id in seen:
                raise ValueError(f"duplicate document {doc_id!r} in query {ranked.query_id!r}")
            seen.add(doc_id)
            lines.append(f"{ranked.query_id} Q0 {doc_id} {rank} {score:.6f} {tag}")
    return "\n".join(lines) + "\n"


def parse_run(text: str) -> list[RankedList]:
    """Read a TREC run file back into ranked lists (rank order wins)."""
    per_query: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 6:
            raise ValueError(f"run line {lineno}: expected 6 fields, got {len(parts)}")
        query_id, _q0, doc_id, rank_str, score_str, _tag = parts
        if query_id not in per_query:
            per_query[query_id] = []
            order.append(query_id)
        per_query[query_id].append((int(rank_str), doc_id, float(score_str)))
    out = []
    for query_id in order:
        rows = sorted(per_query[query_id])
        out.append(
            RankedList(
                query_id=query_id,
                entries=tuple((doc_id, score) for _, doc_id, score in rows),
                method_tag="from-run-file",
            )
        )
    return out


def latency_csv(samples: list[LatencySample]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["query_id", "stage", "seconds", "config_tag"])
    for s in samples:
        writer.writerow([s.query_id, s.stage, f"{s.seconds:.9f}", s.config_tag])
    return buf.getvalue()


def parse_latency_csv(text: str) -> list[LatencySample]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        LatencySample(
            query_id=row["query_id"],
            stage=row["stage"],
            seconds=float(row["seconds"]),
            config_tag=row["config_tag"],
        )
        for row in reader
    ]


def summarize_latency(
    samples: list[LatencySample], baseline_tag: str, variant_tag: str
) -> dict[str, dict[str, float]]:
    """Per-stage mean latencies and percentage reduction vs the baseline.

    reduction% = 100 * (mean_baseline - mean_variant) / mean_baseline
    """
    report: dict[str, dict[str, float]] = {}
    for stage in LATENCY_STAGES:
        base = [s.seconds for s in samples if s.stage == stage and s.config_tag == baseline_tag]
        var = [s.seconds for s in samples if s.stage == stage and s.config_tag == variant_tag]
        if not base and not var:
            continue
        if not base:
            raise ValueError(f"no samples for baseline tag {baseline_tag!r} at stage {stage!r}")
        if not var:
            raise ValueError(f"no samples for variant tag {variant_tag!r} at stage {stage!r}")
        mean_base = sum(base) / len(base)
        mean_var = sum(var) / len(var)
        report[stage] = {
            "baseline_mean": mean_base,
            "variant_mean": mean_var,
            "reduction_pct": 100.0 * (mean_base - mean_var) / mean_base,
        }
    if not report:
        raise ValueError("no latency samples matched either tag")
    return report
