"""Scorer and oracle implementations for the ranking frameworks.

Three families ship in-repo:

* dump-backed attention scorers reading ICRA files from a DumpStore;
* a synthetic ground-truth oracle with a configurable, input-deterministic
  error rate (for desk-scale framework studies);
* a line-oriented JSONL client for an external model-adapter process.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
import threading
from typing import Sequence

from attnrank.core import Document, LayerInterval, Query, RelevanceJudgments
from attnrank.dump import AttentionDump, DumpStore
from attnrank.frameworks import ListScorer, SetOracle
from attnrank.scoring import aggregate_layers, calibrate, uncalibrated


def _resolve_interval(dump: AttentionDump, interval: LayerInterval | None) -> LayerInterval:
    return interval if interval is not None else LayerInterval(0, dump.num_layers - 1)


class AttentionDumpScorer:
    """Scores documents from ICRA dumps keyed by (query, ordered doc subset).

    If no dump exists for the exact subset, a full-pool dump for the query is
    sliced column-wise as a stand-in, so setwise and sliding-window runs work
    from a single pair of whole-pool dumps.
    """

    def __init__(self, store: DumpStore, interval: LayerInterval | None = None,
                 calibrated: bool = True):
        self.store = store
        self.interval = interval
        self.calibrated = calibrated
        # setwise/sliding runs ask for thousands of subsets; keep dumps hot
        self._exact: dict[tuple[str, tuple[str, ...], bool], AttentionDump] = {}
        self._covers: dict[tuple[str, bool], list[AttentionDump]] = {}

    def _load(self, query_id: str, doc_ids: tuple[str, ...], calibration: bool) -> AttentionDump:
        key = (query_id, doc_ids, calibration)
        if key in self._exact:
            return self._exact[key]
        try:
            dump = self.store.load(query_id, doc_ids, calibration, scan=False)
            self._exact[key] = dump
            return dump
        except FileNotFoundError:
            cover_key = (query_id, calibration)
            if cover_key not in self._covers:
                self._covers[cover_key] = [
                    d for d in self.store.iter_dumps()
                    if d.query_id == query_id and d.calibration == calibration
                ]
            for dump in self._covers[cover_key]:
                if set(doc_ids) <= set(dump.doc_ids):
                    return dump.slice_docs(doc_ids)
            raise

    def scores(self, query: Query, docs: Sequence[Document]) -> dict[str, float]:
        doc_ids = tuple(d.id for d in docs)
        real = self._load(query.id, doc_ids, calibration=False)
        if self.calibrated:
            null = self._load(query.id, doc_ids, calibration=True)
            matrix = calibrate(real, null)
        else:
            matrix = uncalibrated(real)
        return aggregate_layers(matrix, _resolve_interval(real, self.interval))

    def _winner(self, query: Query, docs: list[Document]) -> int:
        scores = self.scores(query, docs)
        return max(range(len(docs)), key=lambda i: (scores[docs[i].id], -i))

    def list_scorer(self) -> ListScorer:
        tag = "attention-cal" if self.calibrated else "attention-nocal"
        return ListScorer(
            fn=self.scores,
            forward_passes_per_call=2 if self.calibrated else 1,
            name=tag,
        )

    def set_oracle(self) -> SetOracle:
        tag = "attention-cal" if self.calibrated else "attention-nocal"
        return SetOracle(
            fn=self._winner,
            forward_passes_per_call=2 if self.calibrated else 1,
            name=tag,
        )


def _unit_hash(*parts: str) -> float:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class SyntheticOracle:
    """Ground-truth oracle: argmax relevance grade, tie to lowest initial rank.

    ``error_rate`` injects wrong answers deterministically: the decision is a
    hash of (seed, query, window), so the oracle stays a pure function of its
    inputs while behaving like a noisy judge across many windows.
    """

    def __init__(self, qrels: RelevanceJudgments, error_rate: float = 0.0, seed: int = 0):
        if not 0.0 <= error_rate < 1.0:
            raise ValueError("error_rate must be in [0, 1)")
        self.qrels = qrels
        self.error_rate = error_rate
        self.seed = seed

    def _best(self, query: Query, docs: list[Document]) -> int:
        return max(
            range(len(docs)),
            key=lambda i: (self.qrels.grade(query.id, docs[i].id), -docs[i].initial_rank),
        )

    def __call__(self, query: Query, docs: list[Document]) -> int:
        best = self._best(query, docs)
        if self.error_rate > 0.0 and len(docs) > 1:
            key = [str(self.seed), query.id] + [d.id for d in docs]
            if _unit_hash("err", *key) < self.error_rate:
                others = [i for i in range(len(docs)) if i != best]
                pick = int(_unit_hash("pick", *key) * len(others))
                return others[min(pick, len(others) - 1)]
        return best

    def set_oracle(self) -> SetOracle:
        return SetOracle(fn=self.__call__, forward_passes_per_call=1, name="synthetic")


def synthetic_list_scorer(qrels: RelevanceJudgments) -> ListScorer:
    """Perfect listwise scorer: score = relevance grade."""

    def fn(query: Query, docs: list[Document]) -> dict[str, float]:
        return {d.id: float(qrels.grade(query.id, d.id)) for d in docs}

    return ListScorer(fn=fn, forward_passes_per_call=1, name="synthetic")


class AdapterClient:
    """Bridge to a model-adapter subprocess speaking JSONL over stdio.

    One request per line; the adapter answers with exactly one JSON line.
    Requests:  {"op": "select", "mode": "likelihood"|"generation", ...}
               {"op": "score_list", "mode": ..., ...}
    both carrying query_id, query, and docs [{id, text}].  Error responses
    are {"error": "..."}.
    """

    def __init__(self, cmd: list[str]):
        self.cmd = list(cmd)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()  # one in-flight request per process

    def _process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.cmd,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def request(self, payload: dict) -> dict:
        with self._lock:
            proc = self._process()
            assert proc.stdin is not None and proc.stdout is not None
            proc.stdin.write(json.dumps(payload, sort_keys=True) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        if not line:
            raise RuntimeError(f"adapter process {self.cmd!r} closed its output")
        response = json.loads(line)
        if "error" in response:
            raise RuntimeError(f"adapter error: {response['error']}")
        return response

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            assert self._proc.stdin is not None
            self._proc.stdin.close()
            self._proc.wait(timeout=30)
        self._proc = None

    def __enter__(self) -> "AdapterClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _doc_payload(self, docs: list[Document]) -> list[dict]:
        return [{"id": d.id, "text": d.text} for d in docs]

    def set_oracle(self, mode: str) -> SetOracle:
        def fn(query: Query, docs: list[Document]) -> int:
            response = self.request({
                "op": "select",
                "mode": mode,
                "query_id": query.id,
                "query": query.text,
                "docs": self._doc_payload(docs),
            })
            return int(response["winner"])

        return SetOracle(fn=fn, forward_passes_per_call=1, name=f"adapter:{mode}")

    def list_scorer(self, mode: str) -> ListScorer:
        def fn(query: Query, docs: list[Document]) -> dict[str, float]:
            response = self.request({
                "op": "score_list",
                "mode": mode,
                "query_id": query.id,
                "query": query.text,
                "docs": self._doc_payload(docs),
            })
            return {k: float(v) for k, v in response["scores"].items()}

        return ListScorer(fn=fn, forward_passes_per_call=1, name=f"adapter:{mode}")
