"""
Infrastructure Layer - Report Writer

Schema-stable CSV reports: fixed header order, fixed float formatting.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from src.domain.entities import AggregateSummary, KMetrics, MetricReport, merge_reports

from .config import settings

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["system", "seed", "K", "recall", "ndcg", "n_users"]
SUMMARY_COLUMNS = [
    "system",
    "baseline",
    "metric",
    "K",
    "mean",
    "baseline_mean",
    "mean_difference",
    "n_runs",
    "p_value",
    "degenerate",
]


def write_table(df: pd.DataFrame, path: Path | str) -> Path:
    """Write any table with the configured float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=settings.float_format, lineterminator="\n")
    logger.info(f"Wrote {path}")
    return path


def write_metric_csv(reports: Sequence[MetricReport], path: Path | str) -> Path:
    """``system,seed,K,recall,ndcg,n_users`` rows in report order."""
    df = pd.DataFrame(merge_reports(reports), columns=METRIC_COLUMNS)
    return write_table(df, path)


def read_metric_csv(path: Path | str) -> list[MetricReport]:
    """Inverse of write_metric_csv; one report per (system, seed)."""
    df = pd.read_csv(path, dtype={"system": str})
    missing = [c for c in METRIC_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")

    reports: list[MetricReport] = []
    for (system, seed), group in df.groupby(["system", "seed"], sort=False):
        reports.append(
            MetricReport(
                system=str(system),
                seed=int(seed),
                per_k={
                    int(row.K): KMetrics(recall=float(row.recall), ndcg=float(row.ndcg))
                    for row in group.itertuples()
                },
                n_users=int(group["n_users"].iloc[0]),
            )
        )
    return reports


def write_summary_csv(summaries: Sequence[AggregateSummary], path: Path | str) -> Path:
    """Means and p-values, one row per (system, metric, K)."""
    rows = [
        {
            "system": s.system,
            "baseline": s.baseline,
            "metric": r.metric,
            "K": r.k,
            "mean": r.mean,
            "baseline_mean": r.baseline_mean,
            "mean_difference": r.mean_difference,
            "n_runs": r.n_runs,
            "p_value": r.p_value,
            "degenerate": r.degenerate,
        }
        for s in summaries
        for r in s.rows
    ]
    return write_table(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), path)


def write_sweep_csv(
    factor: str, points: Sequence[tuple[float, MetricReport]], path: Path | str
) -> Path:
    """
    Plot-ready ``(factor, K, recall, ndcg)`` rows, ascending in the factor.

    ``points`` pairs a factor value with the seed-averaged report at that value.
    """
    rows = [
        {factor: value, "K": k, "recall": report.recall(k), "ndcg": report.ndcg(k)}
        for value, report in sorted(points, key=lambda p: p[0])
        for k in report.ks
    ]
    return write_table(pd.DataFrame(rows, columns=[factor, "K", "recall", "ndcg"]), path)
