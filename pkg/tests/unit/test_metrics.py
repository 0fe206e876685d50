"""
Unit Tests for Domain Layer - Ranking Metrics
"""

from __future__ import annotations

import math
import random

import numpy as np
import pytest
import torch
from scipy import stats

from src.domain.entities import KMetrics, MetricReport, RankingResult
from src.domain.metrics import (
    aggregate_and_test,
    compute_metrics,
    mean_report,
    rank_target,
    rank_targets_batch,
    uniform_ndcg_expectation,
)


def _report(system: str, seed: int, recall10: float, ndcg10: float = 0.05) -> MetricReport:
    return MetricReport(
        system=system,
        seed=seed,
        per_k={10: KMetrics(recall=recall10, ndcg=ndcg10)},
        n_users=100,
    )


class TestRankTarget:
    """Tests for full-ranking target ranks."""

    def test_top_score(self):
        assert rank_target([0.7, 0.2, 0.1], target=0).target_rank == 1

    def test_exclusion_removes_leader(self):
        assert rank_target([0.2, 0.7, 0.1], target=0, excluded={1}).target_rank == 1

    def test_ties_broken_by_index(self):
        """Test that all-equal scores rank item 2 third."""
        assert rank_target([0.2] * 5, target=2).target_rank == 3

    def test_excluded_target(self):
        with pytest.raises(ValueError, match="excluded"):
            rank_target([0.1, 0.2], target=1, excluded={1})

    def test_target_out_of_range(self):
        with pytest.raises(IndexError):
            rank_target([0.1, 0.2], target=2)

    def test_distinct_slots_give_permutation(self):
        """Test that targets topping disjoint slots produce ranks 1..n."""
        scores = torch.tensor([0.9, 0.5, 0.7, 0.1, 0.3])
        ranks = sorted(rank_target(scores, t).target_rank for t in range(5))
        assert ranks == [1, 2, 3, 4, 5]

    def test_batch_matches_single(self):
        """Test vectorized ranks against the scalar definition."""
        gen = torch.Generator().manual_seed(0)
        scores = torch.randint(0, 4, (30, 9), generator=gen).float()
        targets = torch.randint(0, 9, (30,), generator=gen)
        excluded = torch.rand(30, 9, generator=gen) < 0.3
        excluded[torch.arange(30), targets] = False
        batch = rank_targets_batch(scores, targets, excluded)
        for b in range(30):
            single = rank_target(
                scores[b], int(targets[b]), excluded=excluded[b].nonzero().flatten().tolist()
            )
            assert int(batch[b]) == single.target_rank


class TestComputeMetrics:
    """Tests for Recall@K and NDCG@K."""

    @pytest.mark.parametrize(
        ("rank", "k", "recall", "ndcg"),
        [(1, 10, 1.0, 1.0), (3, 5, 1.0, 0.5), (11, 10, 0.0, 0.0)],
    )
    def test_single_user(self, rank, k, recall, ndcg):
        report = compute_metrics([RankingResult("u", rank)], ks=[k])
        assert report.recall(k) == pytest.approx(recall)
        assert report.ndcg(k) == pytest.approx(ndcg)

    def test_brute_force_oracle(self):
        """Test 100 random instances against the textbook formulas."""
        rng = random.Random(0)
        for _ in range(100):
            n_items = rng.randint(1, 20)
            n_users = rng.randint(1, 50)
            ranks = [rng.randint(1, n_items) for _ in range(n_users)]
            report = compute_metrics([RankingResult(f"u{i}", r) for i, r in enumerate(ranks)])
            for k in (3, 5, 10, 20):
                recall = sum(1 for r in ranks if r <= k) / n_users
                ndcg = sum(1 / math.log2(r + 1) for r in ranks if r <= k) / n_users
                assert report.recall(k) == pytest.approx(recall, abs=1e-9)
                assert report.ndcg(k) == pytest.approx(ndcg, abs=1e-9)

    def test_monotone_in_k(self):
        rng = random.Random(1)
        ranks = [rng.randint(1, 30) for _ in range(40)]
        report = compute_metrics([RankingResult("u", r) for r in ranks], ks=[1, 3, 5, 10, 20])
        ks = report.ks
        for a, b in zip(ks, ks[1:]):
            assert report.recall(a) <= report.recall(b)
            assert report.ndcg(a) <= report.ndcg(b)
        for k in ks:
            assert report.ndcg(k) <= report.recall(k)

    def test_invalid_k(self):
        with pytest.raises(ValueError, match="positive"):
            compute_metrics([RankingResult("u", 1)], ks=[0, 5])

    def test_empty(self):
        with pytest.raises(ValueError):
            compute_metrics([])

    def test_uniform_expectation(self):
        """Test the closed form against an exhaustive average over ranks."""
        report = compute_metrics([RankingResult("u", r) for r in range(1, 101)], ks=[10])
        assert uniform_ndcg_expectation(100, 10) == pytest.approx(report.ndcg(10))
        assert report.recall(10) == pytest.approx(0.10)


class TestAggregateAndTest:
    """Tests for multi-seed aggregation."""

    def test_identical_lists(self):
        """Test that a system compared with itself has zero difference and p = 1."""
        reports = [_report("a", s, 0.1 + 0.01 * s) for s in range(5)]
        summary = aggregate_and_test(reports, reports)
        row = summary.find("recall", 10)
        assert row.mean_difference == 0.0
        assert row.p_value == 1.0
        assert row.degenerate

    def test_constant_offset_is_degenerate(self):
        ours = [_report("a", s, 0.11) for s in range(5)]
        base = [_report("b", s, 0.10) for s in range(5)]
        row = aggregate_and_test(ours, base).find("recall", 10)
        assert row.degenerate
        assert row.p_value is None
        assert row.mean_difference == pytest.approx(0.01)

    def test_mean_and_paired_t_test(self):
        ours = [_report("a", s, v) for s, v in enumerate([0.1, 0.2, 0.3])]
        base = [_report("b", s, v) for s, v in enumerate([0.05, 0.17, 0.22])]
        row = aggregate_and_test(ours, base).find("recall", 10)
        assert row.mean == pytest.approx(0.2)
        expected = stats.ttest_rel([0.1, 0.2, 0.3], [0.05, 0.17, 0.22]).pvalue
        assert row.p_value == pytest.approx(expected)
        assert not row.degenerate

    def test_single_run_has_no_p_value(self):
        row = aggregate_and_test([_report("a", 0, 0.2)], [_report("b", 0, 0.1)]).find("ndcg", 10)
        assert row.p_value is None
        assert row.n_runs == 1

    def test_paired_by_seed(self):
        """Test that input order does not matter."""
        ours = [_report("a", s, v) for s, v in [(2, 0.3), (0, 0.1), (1, 0.25)]]
        base = [_report("b", s, v) for s, v in [(0, 0.1), (1, 0.2), (2, 0.2)]]
        row = aggregate_and_test(ours, base).find("recall", 10)
        assert row.mean_difference == pytest.approx(np.mean([0.0, 0.05, 0.1]))

    def test_seed_mismatch(self):
        with pytest.raises(ValueError, match="Seeds do not match"):
            aggregate_and_test([_report("a", 0, 0.1)], [_report("b", 1, 0.1)])


class TestMeanReport:
    def test_averages_common_ks(self):
        a = MetricReport(
            system="x",
            seed=0,
            per_k={5: KMetrics(recall=0.2, ndcg=0.1), 10: KMetrics(recall=0.4, ndcg=0.2)},
            n_users=10,
        )
        b = _report("x", 1, 0.2, 0.1)
        mean = mean_report([a, b], system="avg")
        assert mean.ks == [10]
        assert mean.recall(10) == pytest.approx(0.3)
        assert mean.ndcg(10) == pytest.approx(0.15)
        assert mean.system == "avg"

    def test_empty(self):
        with pytest.raises(ValueError):
            mean_report([])
