"""Layer-wise effectiveness sweeps and center-biased interval selection.

A sweep scores every query through one layer at a time and plots the mean
metric per layer; the resulting curve is bell-shaped on real models.  The
interval selector turns observed peak layers into an aggregation interval
under two constraints: the interval must contain every observed peak, and
it extends from the peak set toward the model's geometric center.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from attnrank.core import LayerInterval, RelevanceJudgments
from attnrank.dump import AttentionDump
from attnrank.evaluation import ndcg_at_k
from attnrank.scoring import aggregate_layers, calibrate, pool_from_dump
from attnrank.core import stable_rank


@dataclass(frozen=True)
class LayerCurve:
    dataset_id: str
    model_name: str
    per_layer_metric: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.per_layer_metric) < 1:
            raise ValueError("layer curve must have at least one layer")
        object.__setattr__(self, "per_layer_metric", tuple(float(v) for v in self.per_layer_metric))

    @property
    def total_layers(self) -> int:
        return len(self.per_layer_metric)


@dataclass(frozen=True)
class PeakReport:
    per_dataset_peaks: dict[str, int]
    total_layers: int

    def __post_init__(self) -> None:
        if not self.per_dataset_peaks:
            raise ValueError("peak report needs at least one dataset peak")
        bad = {d: p for d, p in self.per_dataset_peaks.items()
               if not 0 <= p < self.total_layers}
        if bad:
            raise ValueError(f"peak indices out of range for {self.total_layers} layers: {bad}")

    @property
    def peak_set(self) -> set[int]:
        return set(self.per_dataset_peaks.values())


def per_layer_metrics(
    dump_pairs: list[tuple[AttentionDump, AttentionDump]],
    qrels: RelevanceJudgments,
    k: int,
    dataset_id: str = "default",
) -> LayerCurve:
    """Mean nDCG@k per layer across queries, each layer scored in isolation.

    Result is identical to running score_icr with interval [l, l] for every
    layer l (same calibration, same dump doc order as first-stage order, same
    tie-break); the loop is vectorized because a sweep touches every layer of
    every query.  Tests pin the equivalence against the literal path.
    """
    if not dump_pairs:
        raise ValueError("no dump pairs provided")
    total_layers = dump_pairs[0][0].num_layers
    model_name = dump_pairs[0][0].model_name
    for real, null in dump_pairs:
        if real.num_layers != total_layers or null.num_layers != total_layers:
            raise ValueError(
                f"inconsistent layer counts across dumps: expected {total_layers}, "
                f"query {real.query_id!r} has {real.num_layers}/{null.num_layers}"
            )
    discounts = 1.0 / np.log2(np.arange(2, k + 2, dtype=np.float64))
    sums = np.zeros(total_layers)
    for real, null in dump_pairs:
        cal = calibrate(real, null).values
        grades = np.array(
            [qrels.grade(real.query_id, d) for d in real.doc_ids], dtype=np.float64
        )
        ideal = np.sort(
            np.asarray(qrels.judged_grades(real.query_id), dtype=np.float64)
        )[::-1][:k]
        idcg = float((ideal * discounts[: len(ideal)]).sum())
        if idcg == 0.0:
            continue
        # Stable argsort of -scores on dump order == stable_rank's tie rule,
        # because dump doc order is the first-stage order.
        order = np.argsort(-cal, axis=1, kind="stable")[:, :k]
        dcg = (grades[order] * discounts[: order.shape[1]]).sum(axis=1)
        sums += dcg / idcg
    n = len(dump_pairs)
    return LayerCurve(
        dataset_id=dataset_id,
        model_name=model_name,
        per_layer_metric=tuple(float(s) / n for s in sums),
    )


def per_layer_metrics_reference(
    dump_pairs: list[tuple[AttentionDump, AttentionDump]],
    qrels: RelevanceJudgments,
    k: int,
    dataset_id: str = "default",
) -> LayerCurve:
    """Literal per-layer sweep through score_icr; the oracle for the fast path."""
    total_layers = dump_pairs[0][0].num_layers
    sums = [0.0] * total_layers
    for real, null in dump_pairs:
        matrix = calibrate(real, null)
        pool = pool_from_dump(real)
        for layer in range(total_layers):
            scores = aggregate_layers(matrix, LayerInterval(layer, layer))
            ranked = stable_rank(real.query_id, scores, pool, method_tag=f"layer{layer}")
            sums[layer] += ndcg_at_k(ranked, qrels, k)
    n = len(dump_pairs)
    return LayerCurve(
        dataset_id=dataset_id,
        model_name=dump_pairs[0][0].model_name,
        per_layer_metric=tuple(s / n for s in sums),
    )


def smooth_curve(curve: LayerCurve, window: int) -> LayerCurve:
    """Centered moving average; the window truncates at the boundaries."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and positive, got {window}")
    values = curve.per_layer_metric
    if window > len(values):
        raise ValueError(f"window {window} exceeds curve length {len(values)}")
    half = window // 2
    smoothed = []
    for i in range(len(values)):
        lo = max(0, i - half)
        hi = min(len(values), i + half + 1)
        smoothed.append(sum(values[lo:hi]) / (hi - lo))
    return LayerCurve(curve.dataset_id, curve.model_name, tuple(smoothed))


def find_peak(curve: LayerCurve) -> int:
    """Argmax layer; ties go to the layer nearest the geometric center,
    then to the lower index."""
    values = curve.per_layer_metric
    center = (len(values) - 1) / 2
    best = max(values)
    candidates = [i for i, v in enumerate(values) if v == best]
    return min(candidates, key=lambda i: (abs(i - center), i))


def build_peak_report(
    curves: list[LayerCurve], smoothing_window: int = 1
) -> PeakReport:
    """One peak per dataset curve; window 1 leaves curves raw."""
    if not curves:
        raise ValueError("no curves provided")
    total_layers = curves[0].total_layers
    if any(c.total_layers != total_layers for c in curves):
        raise ValueError("curves disagree on total layer count")
    peaks = {
        c.dataset_id: find_peak(smooth_curve(c, smoothing_window))
        for c in curves
    }
    return PeakReport(per_dataset_peaks=peaks, total_layers=total_layers)


def select_interval(peaks: PeakReport, w: int) -> LayerInterval:
    """Center-biased interval selection.

    The interval must contain every observed peak (peak anchoring) and is
    extended from the peak set toward the model's geometric center (central
    bias): a peak set sitting in the later half anchors the upper bound and
    grows downward; one in the earlier half anchors the lower bound and
    grows upward.  The direction is fixed once from the peak-set midpoint,
    never re-evaluated mid-extension.
    """
    if w < 1:
        raise ValueError("window size must be >= 1")
    total = peaks.total_layers
    lo = min(peaks.peak_set)
    hi = max(peaks.peak_set)
    span = hi - lo + 1
    if w < span:
        raise ValueError(
            f"window cannot cover observed peaks: w={w} < peak span {span} ({sorted(peaks.peak_set)})"
        )
    center = (total - 1) / 2
    midpoint = (lo + hi) / 2
    if midpoint >= center:
        return LayerInterval(max(0, hi - w + 1), hi)
    return LayerInterval(lo, min(total - 1, lo + w - 1))


def curve_csv(curve: LayerCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["layer_index", "metric"])
    for i, v in enumerate(curve.per_layer_metric):
        writer.writerow([i, f"{v:.10g}"])
    return buf.getvalue()


def parse_curve_csv(text: str, dataset_id: str = "default", model_name: str = "") -> LayerCurve:
    reader = csv.DictReader(io.StringIO(text))
    rows = sorted((int(r["layer_index"]), float(r["metric"])) for r in reader)
    if [i for i, _ in rows] != list(range(len(rows))):
        raise ValueError("curve CSV layer indices must be contiguous from 0")
    return LayerCurve(dataset_id, model_name, tuple(v for _, v in rows))
