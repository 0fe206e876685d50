"""
Domain Layer - Ranking Metrics

Full-ranking target ranks, Recall@K / NDCG@K with a single held-out item
per user, and paired significance tests across seeds.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence

import numpy as np
import torch
from scipy import stats

from .entities import AggregateSummary, KMetrics, MetricReport, MetricSummary, RankingResult

logger = logging.getLogger(__name__)

DEFAULT_KS = (3, 5, 10, 20)
METRIC_NAMES = ("recall", "ndcg")


# ============================================================================
# Ranking
# ============================================================================


def rank_target(
    scores: Sequence[float] | np.ndarray | torch.Tensor,
    target: int,
    excluded: Iterable[int] = (),
    user: str = "",
) -> RankingResult:
    """
    1-based rank of ``target`` among non-excluded items.

    rank = 1 + #{higher score} + #{equal score with smaller index}.
    """
    values = np.asarray(
        scores.detach().cpu().numpy() if isinstance(scores, torch.Tensor) else scores,
        dtype=np.float64,
    )
    excluded = set(excluded)
    if target in excluded:
        raise ValueError(f"Target item {target} is excluded from ranking")
    if not 0 <= target < len(values):
        raise IndexError(f"Target {target} outside [0, {len(values)})")

    valid = np.ones(len(values), dtype=bool)
    if excluded:
        valid[list(excluded)] = False
    t = values[target]
    higher = np.count_nonzero(valid & (values > t))
    tied_before = np.count_nonzero(valid[:target] & (values[:target] == t))
    return RankingResult(user=user, target_rank=1 + int(higher) + int(tied_before))


def rank_targets_batch(
    scores: torch.Tensor, targets: torch.Tensor, excluded: torch.Tensor | None = None
) -> torch.Tensor:
    """
    Vectorized ``rank_target`` over a B×C score matrix.

    Args:
        scores: B×C scores
        targets: B target columns
        excluded: B×C boolean, True where an item is not ranked

    Returns:
        B integer ranks
    """
    b, c = scores.shape
    rows = torch.arange(b)
    valid = torch.ones_like(scores, dtype=torch.bool) if excluded is None else ~excluded
    if not bool(valid[rows, targets].all()):
        raise ValueError("A target item is excluded from ranking")
    target_scores = scores[rows, targets].unsqueeze(1)
    before = torch.arange(c).unsqueeze(0) < targets.unsqueeze(1)
    higher = (valid & (scores > target_scores)).sum(dim=1)
    tied = (valid & before & (scores == target_scores)).sum(dim=1)
    return 1 + higher + tied


# ============================================================================
# Metrics
# ============================================================================


def compute_metrics(
    results: Sequence[RankingResult],
    ks: Sequence[int] = DEFAULT_KS,
    system: str = "kgbridge",
    seed: int = 0,
    n_skipped: int = 0,
) -> MetricReport:
    """
    Recall@K and NDCG@K with one relevant item per user.

    Recall@K = mean 1[rank ≤ K]; NDCG@K = mean 1[rank ≤ K] / log₂(rank + 1).
    """
    if not results:
        raise ValueError("compute_metrics needs at least one ranking result")
    bad = [k for k in ks if k <= 0]
    if bad:
        raise ValueError(f"K must be positive, got {bad}")

    ranks = np.array([r.target_rank for r in results], dtype=np.float64)
    discounts = 1.0 / np.log2(ranks + 1.0)
    per_k = {
        int(k): KMetrics(
            recall=float(np.mean(ranks <= k)),
            ndcg=float(np.mean(np.where(ranks <= k, discounts, 0.0))),
        )
        for k in sorted(set(ks))
    }
    return MetricReport(
        system=system, seed=seed, per_k=per_k, n_users=len(results), n_skipped=n_skipped
    )


def uniform_ndcg_expectation(n_items: int, k: int) -> float:
    """Expected NDCG@K when the target's rank is uniform over n_items."""
    return sum(1.0 / math.log2(r + 1) for r in range(1, min(k, n_items) + 1)) / n_items


# ============================================================================
# Aggregation
# ============================================================================


def _by_seed(reports: Sequence[MetricReport]) -> list[MetricReport]:
    seeds = [r.seed for r in reports]
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"Duplicate seeds in reports: {seeds}")
    return sorted(reports, key=lambda r: r.seed)


def aggregate_and_test(
    reports: Sequence[MetricReport], baseline: Sequence[MetricReport]
) -> AggregateSummary:
    """
    Per-metric means and two-sided paired t-tests against a baseline.

    Runs are paired by seed. With fewer than two runs the p-value is absent;
    when every paired difference is equal the test is flagged degenerate
    (p = 1 for a zero difference, absent otherwise).
    """
    if not reports:
        raise ValueError("No reports to aggregate")
    ours, base = _by_seed(reports), _by_seed(baseline)
    if [r.seed for r in ours] != [r.seed for r in base]:
        raise ValueError(
            f"Seeds do not match: {[r.seed for r in ours]} vs {[r.seed for r in base]}"
        )

    ks = sorted(set.intersection(*(set(r.per_k) for r in (*ours, *base))))
    rows: list[MetricSummary] = []
    for metric in METRIC_NAMES:
        for k in ks:
            a = np.array([getattr(r.per_k[k], metric) for r in ours])
            b = np.array([getattr(r.per_k[k], metric) for r in base])
            diff = a - b
            p_value: float | None = None
            degenerate = False
            if len(a) >= 2:
                if np.ptp(diff) == 0.0:
                    degenerate = True
                    p_value = 1.0 if diff[0] == 0.0 else None
                    logger.warning(f"{metric}@{k}: zero variance in paired differences")
                else:
                    p_value = float(stats.ttest_rel(a, b).pvalue)
            rows.append(
                MetricSummary(
                    metric=metric,
                    k=k,
                    mean=float(a.mean()),
                    baseline_mean=float(b.mean()),
                    mean_difference=float(diff.mean()),
                    n_runs=len(a),
                    p_value=p_value,
                    degenerate=degenerate,
                )
            )

    return AggregateSummary(
        system=ours[0].system, baseline=base[0].system, rows=rows
    )


def mean_report(reports: Sequence[MetricReport], system: str | None = None) -> MetricReport:
    """Per-K metric means over runs (seed of the result is the first run's)."""
    if not reports:
        raise ValueError("No reports to average")
    ks = sorted(set.intersection(*(set(r.per_k) for r in reports)))
    per_k = {
        k: KMetrics(
            recall=float(np.mean([r.per_k[k].recall for r in reports])),
            ndcg=float(np.mean([r.per_k[k].ndcg for r in reports])),
        )
        for k in ks
    }
    return MetricReport(
        system=system or reports[0].system,
        seed=reports[0].seed,
        per_k=per_k,
        n_users=reports[0].n_users,
        n_skipped=reports[0].n_skipped,
    )
