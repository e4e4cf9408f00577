import math

import numpy as np
import pytest

from attnrank.core import Document, Query, RelevanceJudgments
from attnrank.frameworks import (
    ListScorer,
    SetOracle,
    bubblesort_call_bound,
    heapsort_call_bound,
    listwise_single,
    listwise_sliding,
    setwise_bubblesort,
    setwise_heapsort,
)
from attnrank.scorers import SyntheticOracle, synthetic_list_scorer

Q = Query("q", "a query")


def pool_of(n):
    return [Document(f"d{i:03d}", initial_rank=i) for i in range(n)]


def graded_pool(rng, n, levels=4):
    pool = pool_of(n)
    grades = {("q", d.id): int(g) for d, g in zip(pool, rng.integers(0, levels, size=n))}
    qrels = RelevanceJudgments({k: v for k, v in grades.items() if v > 0})
    return pool, qrels


def true_top_order(pool, qrels):
    # independent full-sort oracle for the exact top-k expectation
    return [
        d.id
        for d in sorted(pool, key=lambda d: (-qrels.grade("q", d.id), d.initial_rank))
    ]


class TestListwiseSingle:
    def test_pool_of_one(self):
        scorer = synthetic_list_scorer(RelevanceJudgments({}))
        ranked, stats = listwise_single(Q, pool_of(1), scorer)
        assert ranked.doc_ids == ["d000"]
        assert stats.oracle_calls == 1

    def test_perfect_scorer_gives_ideal_order(self):
        rng = np.random.default_rng(0)
        pool = pool_of(8)
        # distinct grades so the ideal order is unique
        grades = {("q", d.id): i for i, d in enumerate(reversed(pool), start=1)}
        qrels = RelevanceJudgments(grades)
        ranked, _ = listwise_single(Q, pool, synthetic_list_scorer(qrels))
        assert ranked.doc_ids == true_top_order(pool, qrels)

    def test_wrong_doc_set_rejected(self):
        bad = ListScorer(fn=lambda q, docs: {"nope": 1.0}, name="bad")
        with pytest.raises(ValueError, match="wrong doc set"):
            listwise_single(Q, pool_of(3), bad)

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError, match="empty pool"):
            listwise_single(Q, [], synthetic_list_scorer(RelevanceJudgments({})))


class TestListwiseSliding:
    def test_call_count_100_20_10(self):
        calls = []
        scorer = ListScorer(
            fn=lambda q, docs: (calls.append(len(docs)) or {d.id: 0.0 for d in docs}),
            name="count",
        )
        _, stats = listwise_sliding(Q, pool_of(100), scorer, ws=20, step=10)
        assert stats.oracle_calls == len(calls) == 9  # ceil(80/10) + 1

    def test_uneven_step_clamps_head_window(self):
        scorer = synthetic_list_scorer(RelevanceJudgments({}))
        _, stats = listwise_sliding(Q, pool_of(25), scorer, ws=20, step=10)
        assert stats.oracle_calls == math.ceil((25 - 20) / 10) + 1 == 2

    def test_ws_equals_n_matches_single(self):
        rng = np.random.default_rng(4)
        pool, qrels = graded_pool(rng, 30)
        scorer = synthetic_list_scorer(qrels)
        single, _ = listwise_single(Q, pool, scorer)
        for step in (1, 7, 29):
            sliding, stats = listwise_sliding(Q, pool, scorer, ws=30, step=step)
            assert sliding.doc_ids == single.doc_ids
            assert sliding.entries == single.entries  # exact, including scores
            assert stats.oracle_calls == 1

    def test_tail_document_travels_to_head_in_one_pass(self):
        # relevant doc initially last; ws=20, step=10 over N=30 lets it ride
        pool = pool_of(30)
        qrels = RelevanceJudgments({("q", "d029"): 3})
        ranked, stats = listwise_sliding(Q, pool, synthetic_list_scorer(qrels), 20, 10)
        assert ranked.doc_ids[0] == "d029"
        assert stats.oracle_calls == 2

    def test_parameter_validation(self):
        scorer = synthetic_list_scorer(RelevanceJudgments({}))
        with pytest.raises(ValueError):
            listwise_sliding(Q, pool_of(10), scorer, ws=10, step=10)  # step !< ws
        with pytest.raises(ValueError):
            listwise_sliding(Q, pool_of(10), scorer, ws=11, step=1)  # ws > N
        with pytest.raises(ValueError):
            listwise_sliding(Q, pool_of(10), scorer, ws=5, step=0)


class TestSetwiseExactness:
    @pytest.mark.parametrize("c", [2, 3, 5])
    def test_perfect_oracle_matches_full_sort(self, c):
        rng = np.random.default_rng(c)
        for trial in range(40):
            n = int(rng.integers(2, 60))
            k = int(rng.integers(1, n + 1))
            pool, qrels = graded_pool(rng, n)
            oracle = SyntheticOracle(qrels).set_oracle()
            expected = true_top_order(pool, qrels)[:k]
            heap_ranked, hs = setwise_heapsort(Q, pool, oracle, c=c, k=k)
            bub_ranked, bs = setwise_bubblesort(Q, pool, oracle, c=c, k=k)
            assert heap_ranked.doc_ids[:k] == expected
            assert bub_ranked.doc_ids[:k] == expected
            assert heap_ranked.doc_ids[:k] == bub_ranked.doc_ids[:k]
            assert hs.oracle_calls <= heapsort_call_bound(n, c, k)
            assert bs.oracle_calls <= bubblesort_call_bound(n, c, k)

    def test_rest_keeps_first_stage_order(self):
        rng = np.random.default_rng(8)
        pool, qrels = graded_pool(rng, 25)
        oracle = SyntheticOracle(qrels).set_oracle()
        ranked, _ = setwise_heapsort(Q, pool, oracle, c=3, k=5)
        rest = ranked.doc_ids[5:]
        assert rest == sorted(rest)  # d-ids encode initial rank

    def test_heapsort_call_budget_100_3_10(self):
        rng = np.random.default_rng(11)
        pool, qrels = graded_pool(rng, 100)
        oracle = SyntheticOracle(qrels).set_oracle()
        _, stats = setwise_heapsort(Q, pool, oracle, c=3, k=10)
        assert stats.oracle_calls <= 100 + 10 * math.ceil(math.log2(100))  # 170

    def test_heapsort_k1_lower_bound(self):
        for c in (2, 3, 5):
            rng = np.random.default_rng(17 + c)
            pool, qrels = graded_pool(rng, 40)
            oracle = SyntheticOracle(qrels).set_oracle()
            _, stats = setwise_heapsort(Q, pool, oracle, c=c, k=1)
            assert stats.oracle_calls >= math.ceil((40 - 1) / (c - 1))

    def test_bubblesort_call_budget_100_3_10(self):
        rng = np.random.default_rng(23)
        pool, qrels = graded_pool(rng, 100)
        oracle = SyntheticOracle(qrels).set_oracle()
        _, stats = setwise_bubblesort(Q, pool, oracle, c=3, k=10)
        assert stats.oracle_calls <= 10 * math.ceil(99 / 2)  # 500, the k*N/(c-1) shape

    def test_bubblesort_c2_classic_pass(self):
        pool = pool_of(4)
        qrels = RelevanceJudgments({("q", "d003"): 1})
        _, stats = setwise_bubblesort(Q, pool, SyntheticOracle(qrels).set_oracle(), c=2, k=1)
        assert stats.oracle_calls == 3  # N-1 pairwise comparisons

    def test_oracle_out_of_bounds_rejected(self):
        bad = SetOracle(fn=lambda q, docs: len(docs), name="bad")
        with pytest.raises(ValueError, match="out-of-bounds"):
            setwise_heapsort(Q, pool_of(5), bad, c=3, k=2)

    def test_noisy_oracle_is_deterministic(self):
        rng = np.random.default_rng(31)
        pool, qrels = graded_pool(rng, 30)
        noisy = SyntheticOracle(qrels, error_rate=0.3, seed=5).set_oracle()
        a, _ = setwise_heapsort(Q, pool, noisy, c=3, k=10)
        b, _ = setwise_heapsort(Q, pool, noisy, c=3, k=10)
        assert a.entries == b.entries


class TestCostAccounting:
    def test_dual_pass_oracle_doubles_forward_passes(self):
        rng = np.random.default_rng(41)
        pool, qrels = graded_pool(rng, 100)
        base = SyntheticOracle(qrels)
        single_pass = SetOracle(fn=base, forward_passes_per_call=1, name="one")
        dual_pass = SetOracle(fn=base, forward_passes_per_call=2, name="two")
        _, s1 = setwise_heapsort(Q, pool, single_pass, c=3, k=10)
        _, s2 = setwise_heapsort(Q, pool, dual_pass, c=3, k=10)
        assert s1.oracle_calls == s2.oracle_calls
        assert s2.forward_passes == 2 * s1.forward_passes
        assert s1.forward_passes == s1.oracle_calls

    def test_docs_touched_counts_window_sizes(self):
        pool = pool_of(4)
        qrels = RelevanceJudgments({})
        _, stats = setwise_bubblesort(Q, pool, SyntheticOracle(qrels).set_oracle(), c=2, k=1)
        assert stats.docs_touched == 6  # 3 pairwise windows

    def test_wall_time_recorded(self):
        pool = pool_of(5)
        scorer = synthetic_list_scorer(RelevanceJudgments({}))
        _, stats = listwise_single(Q, pool, scorer)
        assert stats.wall_time is not None and stats.wall_time >= 0
