"""Calibrated attention scoring: dump pair + layer interval -> ranked list.

The pipeline is a straight subtraction and sum: calibrated[l][d] =
real[l][d] - null[l][d], then score[d] = sum of calibrated values over the
chosen layer interval.  Dumps store float32; all arithmetic here is float64
so the interval-additivity property holds to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from attnrank.core import Document, LayerInterval, RankedList, stable_rank
from attnrank.dump import AttentionDump, validate_pair

ScoreVector = dict[str, float]


@dataclass(frozen=True, eq=False)
class CalibratedMatrix:
    """Per-(layer, doc) scores after null-pass subtraction; may be negative."""

    doc_ids: tuple[str, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 2 or v.shape[1] != len(self.doc_ids):
            raise ValueError(f"matrix shape {v.shape} does not match {len(self.doc_ids)} docs")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    @property
    def num_layers(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_docs(self) -> int:
        return len(self.doc_ids)


def calibrate(real: AttentionDump, null: AttentionDump) -> CalibratedMatrix:
    """Subtract the content-free pass from the real pass, elementwise.

    No rescaling is applied even though the two passes may have different
    query token counts; both counts stay recorded in the dumps.
    """
    validate_pair(real, null)
    values = real.matrix.astype(np.float64) - null.matrix.astype(np.float64)
    return CalibratedMatrix(doc_ids=real.doc_ids, values=values)


def uncalibrated(real: AttentionDump) -> CalibratedMatrix:
    """Single-pass ablation: the raw matrix viewed as already-calibrated."""
    return CalibratedMatrix(doc_ids=real.doc_ids, values=real.matrix.astype(np.float64))


def aggregate_layers(matrix: CalibratedMatrix, interval: LayerInterval) -> ScoreVector:
    """Sum calibrated scores over layers lo..hi inclusive."""
    if interval.hi >= matrix.num_layers:
        raise ValueError(
            f"interval {interval} out of bounds for {matrix.num_layers} layers"
        )
    sums = matrix.values[interval.lo : interval.hi + 1].sum(axis=0)
    return {doc_id: float(s) for doc_id, s in zip(matrix.doc_ids, sums)}


def score_icr(
    real: AttentionDump,
    null: AttentionDump | None,
    interval: LayerInterval,
    pool: list[Document],
    method_tag: str = "",
) -> RankedList:
    """Rank a pool from a dump (pair): calibrate, aggregate, stable-sort.

    ``null=None`` is the single-pass "w/o calibration" ablation.
    """
    pool_ids = {d.id for d in pool}
    dump_ids = set(real.doc_ids)
    if pool_ids != dump_ids:
        only_pool = sorted(pool_ids - dump_ids)
        only_dump = sorted(dump_ids - pool_ids)
        raise ValueError(
            f"pool/dump document mismatch: only in pool {only_pool}, only in dump {only_dump}"
        )
    matrix = calibrate(real, null) if null is not None else uncalibrated(real)
    scores = aggregate_layers(matrix, interval)
    if not method_tag:
        cal = "cal" if null is not None else "nocal"
        method_tag = f"attention-{cal}{interval}"
    return stable_rank(real.query_id, scores, pool, method_tag=method_tag)


def pool_from_dump(dump: AttentionDump) -> list[Document]:
    """First-stage pool implied by a dump: doc_ids are in candidate order."""
    return [Document(id=d, initial_rank=i) for i, d in enumerate(dump.doc_ids)]
