"""Average precision, MAP, precision-recall, top-k precision."""

import numpy as np
import pytest

from xmhash.metrics import (
    UndefinedQueryError,
    average_precision,
    evaluate_rankings,
    macro_pr_curve,
    mean_average_precision,
    precision_recall_curve,
    relevance_judgments,
    top_k_precision,
)


def naive_average_precision(ranking, relevance):
    """Cumulative counting loop straight from the definition."""
    hits = 0
    precisions = []
    for r, item in enumerate(ranking, start=1):
        if relevance[item]:
            hits += 1
            precisions.append(hits / r)
    return sum(precisions) / len(precisions)


def random_case(rng, n=30):
    ranking = rng.permutation(n)
    relevance = rng.random(n) < 0.4
    if not relevance.any():
        relevance[int(rng.integers(n))] = True
    return ranking, relevance


class TestAveragePrecision:
    def test_all_relevant_is_one(self):
        assert average_precision([2, 0, 1], [True, True, True]) == 1.0

    def test_worked_example(self):
        # ranking [rel, irrel, rel]: (1/1 + 2/3) / 2
        ap = average_precision([0, 1, 2], [True, False, True])
        assert ap == pytest.approx(5.0 / 6.0, abs=1e-12)

    def test_matches_cumulative_loop_oracle(self):
        rng = np.random.default_rng(50)
        for _ in range(100):
            ranking, relevance = random_case(rng)
            np.testing.assert_allclose(
                average_precision(ranking, relevance),
                naive_average_precision(ranking, relevance),
                atol=1e-12,
            )

    def test_no_relevant_items_is_undefined(self):
        with pytest.raises(UndefinedQueryError):
            average_precision([0, 1], [False, False])

    def test_non_permutation_rejected(self):
        with pytest.raises(ValueError):
            average_precision([0, 0, 2], [True, True, True])
        with pytest.raises(ValueError):
            average_precision([0, 1], [True, True, True])

    def test_bounds(self):
        rng = np.random.default_rng(51)
        for _ in range(50):
            ranking, relevance = random_case(rng)
            assert 0.0 < average_precision(ranking, relevance) <= 1.0

    def test_one_iff_relevant_items_lead(self):
        rel = np.array([True] * 3 + [False] * 4)
        front = np.arange(7)
        assert average_precision(front, rel) == 1.0
        swapped = front.copy()
        swapped[2], swapped[3] = swapped[3], swapped[2]
        assert average_precision(swapped, rel) < 1.0

    def test_invariant_to_irrelevant_suffix_order(self):
        rng = np.random.default_rng(52)
        rel = np.zeros(10, dtype=bool)
        rel[[0, 3]] = True
        head = [3, 5, 0]
        tail = [1, 2, 4, 6, 7, 8, 9]
        base = average_precision(head + tail, rel)
        for _ in range(5):
            shuffled = head + list(rng.permutation(tail))
            assert average_precision(shuffled, rel) == base


class TestMeanAveragePrecision:
    def test_single_query(self):
        ranking, relevance = [1, 0], [True, False]
        assert mean_average_precision([(ranking, relevance)]) == average_precision(
            ranking, relevance
        )

    def test_arithmetic_mean(self):
        perfect = ([0, 1], [True, False])       # AP 1.0
        half = ([0, 1], [False, True])          # AP 0.5
        assert mean_average_precision([perfect, half]) == pytest.approx(0.75)

    def test_matches_per_query_oracle(self):
        rng = np.random.default_rng(53)
        queries = [random_case(rng) for _ in range(50)]
        expected = np.mean([naive_average_precision(r, rel) for r, rel in queries])
        np.testing.assert_allclose(mean_average_precision(queries), expected, atol=1e-12)

    def test_skips_undefined_queries(self):
        queries = [([0, 1], [True, False]), ([0, 1], [False, False])]
        assert mean_average_precision(queries) == 1.0

    def test_all_undefined_rejected(self):
        with pytest.raises(UndefinedQueryError):
            mean_average_precision([([0, 1], [False, False])])

    def test_random_rankings_concentrate_near_relevant_fraction(self):
        rng = np.random.default_rng(54)
        n = 200
        relevance = np.zeros(n, dtype=bool)
        relevance[:100] = True
        queries = [(rng.permutation(n), relevance) for _ in range(200)]
        assert abs(mean_average_precision(queries) - 0.5) < 0.05


class TestPrecisionRecallCurve:
    def test_perfect_front_loading(self):
        curve = precision_recall_curve([0, 1, 2, 3], [True, True, False, False])
        points = {tuple(p) for p in np.round(curve, 12)}
        assert (0.5, 1.0) in points and (1.0, 1.0) in points

    def test_worst_case_tail(self):
        rel = np.array([False, False, True, True])
        curve = precision_recall_curve([0, 1, 2, 3], rel)
        np.testing.assert_allclose(curve[-1], [1.0, 0.5])

    def test_matches_cumulative_loop(self):
        rng = np.random.default_rng(55)
        ranking, relevance = random_case(rng, n=20)
        curve = precision_recall_curve(ranking, relevance)
        total = relevance.sum()
        hits = 0
        for r, item in enumerate(ranking, start=1):
            hits += bool(relevance[item])
            np.testing.assert_allclose(curve[r - 1], [hits / total, hits / r])

    def test_recall_non_decreasing(self):
        rng = np.random.default_rng(56)
        for _ in range(20):
            ranking, relevance = random_case(rng)
            curve = precision_recall_curve(ranking, relevance)
            assert np.all(np.diff(curve[:, 0]) >= 0)


class TestTopKPrecision:
    def test_whole_gallery_is_relevant_fraction(self):
        rng = np.random.default_rng(57)
        ranking, relevance = random_case(rng, n=16)
        assert top_k_precision(ranking, relevance, 16) == pytest.approx(
            relevance.sum() / 16
        )

    def test_single_hit_at_one(self):
        assert top_k_precision([2, 0, 1], [False, False, True], 1) == 1.0

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(58)
        for _ in range(30):
            ranking, relevance = random_case(rng, n=25)
            hits = sum(bool(relevance[i]) for i in ranking[:5])
            assert top_k_precision(ranking, relevance, 5) == pytest.approx(hits / 5)

    @pytest.mark.parametrize("k", [0, 4])
    def test_k_out_of_range_rejected(self, k):
        with pytest.raises(ValueError):
            top_k_precision([0, 1, 2], [True, True, True], k)


class TestRelevanceJudgments:
    def test_label_intersection_rule(self):
        rel = relevance_judgments([(1,), (2, 3)], [(3,), (1,), ()])
        np.testing.assert_array_equal(
            rel, [[False, True, False], [True, False, False]]
        )


class TestEvaluateRankings:
    def test_counts_skipped_queries(self):
        rankings = [np.array([0, 1]), np.array([1, 0])]
        relevance = np.array([[True, False], [False, False]])
        result = evaluate_rankings(rankings, relevance)
        assert result.map == 1.0
        assert result.skipped == 1
        assert result.n_queries == 2

    def test_macro_pr_curve_averages_per_rank(self):
        rankings = [np.array([0, 1]), np.array([0, 1])]
        relevance = np.array([[True, False], [False, True]])
        curve = macro_pr_curve(rankings, relevance)
        np.testing.assert_allclose(curve[0], [0.5, 0.5])   # rank 1
        np.testing.assert_allclose(curve[1], [1.0, 0.5])   # rank 2
