"""Acceptance suite: one test per release criterion, each printed pass/fail.

Run with ``pytest -v tests/test_acceptance.py`` (add ``-s`` to see the
per-criterion lines immediately).  Every tolerance and time budget is pinned
here; nothing is deferred to later calibration.
"""

import io
import math
import struct
import time
from dataclasses import replace

import numpy as np

from attnrank.core import Document, LayerInterval, Query, RelevanceJudgments
from attnrank.dump import DumpFormatError, read_dump, write_dump
from attnrank.evaluation import ndcg_at_k
from attnrank.frameworks import (
    SetOracle,
    bubblesort_call_bound,
    heapsort_call_bound,
    setwise_bubblesort,
    setwise_heapsort,
)
from attnrank.layers import PeakReport, find_peak, select_interval, smooth_curve
from attnrank.scorers import SyntheticOracle
from attnrank.scoring import aggregate_layers, calibrate, pool_from_dump, score_icr, uncalibrated
from attnrank.synth import SynthConfig, curve_for_config, gen_corpus
from attnrank.core import RankedList
from tests.test_dump import make_dump, random_dump
from tests.test_evaluation import reference_ndcg


class Budget:
    """Context manager asserting the criterion's wall-clock budget."""

    def __init__(self, name: str, seconds: float):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        ok = exc_type is None and elapsed < self.seconds
        print(f"ACCEPTANCE {self.name}: {'PASS' if ok else 'FAIL'} "
              f"({elapsed:.2f}s, budget {self.seconds:g}s)")
        assert exc_type is not None or elapsed < self.seconds, (
            f"{self.name} exceeded its {self.seconds}s budget: {elapsed:.2f}s"
        )
        return False


def test_table2_interval_reproduction():
    rows = [
        ({18}, 32, 4, (15, 18)),
        ({16}, 32, 4, (13, 16)),
        ({10}, 28, 4, (10, 13)),
        ({18, 21}, 36, 4, (18, 21)),
    ]
    with Budget("table2-intervals", 0.001):
        for peaks, total, w, expected in rows:
            report = PeakReport({f"ds{i}": p for i, p in enumerate(sorted(peaks))}, total)
            got = select_interval(report, w)
            assert (got.lo, got.hi) == expected, f"{peaks}/{total} -> {got}"


def test_ndcg_oracle_equivalence():
    rng = np.random.default_rng(2024)
    with Budget("ndcg-oracle-equivalence", 10.0):
        for _ in range(500):
            n = int(rng.integers(1, 40))
            k = int(rng.integers(1, 11))
            ids = [f"d{i}" for i in range(n)]
            grades = {d: int(g) for d, g in zip(ids, rng.integers(0, 5, size=n)) if g > 0}
            perm = list(rng.permutation(ids))
            ranked = RankedList(
                "q", tuple((d, float(n - i)) for i, d in enumerate(perm))
            )
            qrels = RelevanceJudgments({("q", d): g for d, g in grades.items()})
            mine = ndcg_at_k(ranked, qrels, k)
            ref = reference_ndcg(perm, grades, k)
            assert abs(mine - ref) <= 1e-9
            assert 0.0 <= mine <= 1.0 + 1e-12


def test_sorting_exactness_and_bounds():
    rng = np.random.default_rng(7)
    query = Query("q", "")
    with Budget("setwise-sorting-exactness", 60.0):
        for trial in range(1000):
            n = int(rng.integers(2, 201))
            k = int(rng.integers(1, n + 1))
            c = int(rng.choice([2, 3, 5]))
            pool = [Document(f"d{i:03d}", initial_rank=i) for i in range(n)]
            grades = {
                ("q", d.id): int(g) for d, g in zip(pool, rng.integers(0, 4, size=n)) if g > 0
            }
            qrels = RelevanceJudgments(grades)
            oracle = SyntheticOracle(qrels).set_oracle()
            expected = [
                d.id
                for d in sorted(pool, key=lambda d: (-qrels.grade("q", d.id), d.initial_rank))
            ][:k]
            heap_ranked, hs = setwise_heapsort(query, pool, oracle, c=c, k=k)
            bub_ranked, bs = setwise_bubblesort(query, pool, oracle, c=c, k=k)
            assert heap_ranked.doc_ids[:k] == expected
            assert bub_ranked.doc_ids[:k] == expected
            assert heap_ranked.doc_ids[:k] == bub_ranked.doc_ids[:k]
            assert hs.oracle_calls <= heapsort_call_bound(n, c, k)
            assert bs.oracle_calls <= k * math.ceil((n - 1) / (c - 1))
            assert bs.oracle_calls <= bubblesort_call_bound(n, c, k)


def test_calibration_identity():
    rng = np.random.default_rng(55)
    with Budget("calibration-identity", 1.0):
        for _ in range(5):
            m = rng.uniform(0, 0.4, size=(6, 10)).astype(np.float32)
            real = make_dump(m)
            null = make_dump(m, calibration=True)
            pool = pool_from_dump(real)
            first_stage = [d.id for d in pool]
            for lo in range(6):
                for hi in range(lo, 6):
                    ranked = score_icr(real, null, LayerInterval(lo, hi), pool)
                    assert ranked.doc_ids == first_stage
                    assert all(s == 0.0 for _, s in ranked.entries)


def test_layer_additivity():
    rng = np.random.default_rng(808)
    with Budget("layer-additivity", 5.0):
        checked = 0
        while checked < 100:
            dump = random_dump(rng)
            if dump.num_layers < 2:
                continue
            checked += 1
            matrix = uncalibrated(dump)
            a, c = 0, dump.num_layers - 1
            b = int(rng.integers(a, c))
            left = aggregate_layers(matrix, LayerInterval(a, b))
            right = aggregate_layers(matrix, LayerInterval(b + 1, c))
            whole = aggregate_layers(matrix, LayerInterval(a, c))
            for d in dump.doc_ids:
                assert abs(left[d] + right[d] - whole[d]) <= 1e-9


def test_dump_format_roundtrip_and_errors():
    rng = np.random.default_rng(4242)
    with Budget("dump-format", 5.0):
        for _ in range(200):
            dump = random_dump(rng)
            buf = io.BytesIO()
            write_dump(dump, buf)
            data = buf.getvalue()
            back = read_dump(io.BytesIO(data))
            assert back == dump
            rebuf = io.BytesIO()
            write_dump(back, rebuf)
            assert rebuf.getvalue() == data

        good = io.BytesIO()
        write_dump(make_dump([[0.5, 0.25]]), good)
        data = good.getvalue()

        try:
            read_dump(io.BytesIO(b"XXXX" + data[4:]))
            raise AssertionError("bad magic accepted")
        except DumpFormatError as exc:
            assert "not an ICRA file" in str(exc)

        bad_version = bytearray(data)
        bad_version[4:8] = struct.pack("<I", 9)
        try:
            read_dump(io.BytesIO(bytes(bad_version)))
            raise AssertionError("bad version accepted")
        except DumpFormatError as exc:
            assert "unsupported version" in str(exc)

        try:
            read_dump(io.BytesIO(data[:-1]))
            raise AssertionError("short payload accepted")
        except DumpFormatError as exc:
            assert "truncated payload" in str(exc)


def test_bell_curve_recovery():
    base = SynthConfig()  # L=32, p=18, sigma=2, 200 queries
    with Budget("bell-curve-recovery", 60.0):
        hits = 0
        for seed in range(20):
            curve = curve_for_config(replace(base, seed=seed))
            peak = find_peak(smooth_curve(curve, 3))
            hits += abs(peak - base.peak_layer) <= 1
        assert hits / 20 >= 0.95, f"recovered peak within 1 layer in only {hits}/20 seeds"


def test_signal_dilution_direction():
    cfg = replace(SynthConfig(), num_queries=1000, seed=7)
    assert cfg.boundary_noise == 0.5
    with Budget("signal-dilution-direction", 120.0):
        pairs, qrels = gen_corpus(cfg)

        def mean_ndcg(interval):
            total = 0.0
            for real, null in pairs:
                ranked = score_icr(real, null, interval, pool_from_dump(real))
                total += ndcg_at_k(ranked, qrels, 10)
            return total / len(pairs)

        selective = mean_ndcg(LayerInterval(15, 18))
        all_layers = mean_ndcg(LayerInterval(0, 31))
        peak = mean_ndcg(LayerInterval(18, 18))
        assert selective > all_layers, f"selective {selective:.4f} <= all {all_layers:.4f}"
        assert selective >= peak, f"selective {selective:.4f} < peak {peak:.4f}"


def test_cost_accounting_structure():
    rng = np.random.default_rng(99)
    query = Query("q", "")
    with Budget("cost-accounting", 10.0):
        pool = [Document(f"d{i:03d}", initial_rank=i) for i in range(100)]
        grades = {("q", d.id): int(g) for d, g in zip(pool, rng.integers(0, 4, 100)) if g > 0}
        qrels = RelevanceJudgments(grades)
        base = SyntheticOracle(qrels)
        calibrated_ia = SetOracle(fn=base, forward_passes_per_call=2, name="ia-cal")
        single_pass = SetOracle(fn=base, forward_passes_per_call=1, name="ia-nocal")
        _, dual = setwise_heapsort(query, pool, calibrated_ia, c=3, k=10)
        _, single = setwise_heapsort(query, pool, single_pass, c=3, k=10)
        assert dual.oracle_calls == single.oracle_calls
        assert dual.forward_passes == 2 * single.forward_passes

        # executed-layer cost: Selective [15,18] runs 19 of 32 layers
        selective_layers = 18 + 1
        reduction = 100.0 * (32 - selective_layers) / 32
        assert reduction == 40.625  # exact in binary; displays as 40.6%
        assert f"{reduction:.1f}" == "40.6"
