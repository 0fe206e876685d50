"""
Unit Tests for Infrastructure Layer - Reports and Run Storage
"""

from __future__ import annotations

import zipfile

import pandas as pd
import pytest

from src.domain.entities import KMetrics, MetricReport
from src.domain.metrics import aggregate_and_test
from src.domain.run import RunRecord, RunStage, RunStatus
from src.infrastructure.excel_renderer import ExcelRenderer
from src.infrastructure.report_writer import (
    METRIC_COLUMNS,
    read_metric_csv,
    write_metric_csv,
    write_summary_csv,
    write_sweep_csv,
)
from src.infrastructure.run_storage import FileRunStore


def _report(system: str, seed: int, scale: float = 1.0) -> MetricReport:
    return MetricReport(
        system=system,
        seed=seed,
        per_k={
            5: KMetrics(recall=0.2 * scale, ndcg=0.1 * scale),
            10: KMetrics(recall=0.3 * scale, ndcg=0.125 * scale),
        },
        n_users=50,
    )


class TestMetricCsv:
    """Tests for metric CSV files."""

    def test_header_and_format(self, temp_dir):
        """Test the fixed column order and six-decimal floats."""
        path = write_metric_csv([_report("full", 0)], temp_dir / "metrics.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(METRIC_COLUMNS)
        assert lines[1] == "full,0,5,0.200000,0.100000,50"
        assert lines[2] == "full,0,10,0.300000,0.125000,50"

    def test_read_back(self, temp_dir):
        reports = [_report("full", 0), _report("full", 1, 0.5), _report("no_disen", 0)]
        path = write_metric_csv(reports, temp_dir / "metrics.csv")
        loaded = read_metric_csv(path)
        assert [(r.system, r.seed) for r in loaded] == [("full", 0), ("full", 1), ("no_disen", 0)]
        assert loaded[1].recall(10) == pytest.approx(0.15)
        assert loaded[0].n_users == 50

    def test_missing_columns(self, temp_dir):
        path = temp_dir / "bad.csv"
        path.write_text("system,seed,K\nfull,0,10\n")
        with pytest.raises(ValueError, match="missing columns"):
            read_metric_csv(path)


class TestSummaryAndSweep:
    def test_summary_rows(self, temp_dir):
        ours = [_report("full", s, 1.0 + 0.1 * s) for s in range(3)]
        base = [_report("no_kg_init", s, 0.9 + 0.05 * s) for s in range(3)]
        path = write_summary_csv([aggregate_and_test(ours, base)], temp_dir / "summary.csv")
        df = pd.read_csv(path)
        assert len(df) == 4
        assert set(df["metric"]) == {"recall", "ndcg"}
        assert (df["baseline"] == "no_kg_init").all()

    def test_sweep_sorted(self, temp_dir):
        """Test that sweep rows ascend in the factor."""
        points = [(0.4, _report("x", 0)), (0.0, _report("x", 0, 1.2)), (0.2, _report("x", 0))]
        path = write_sweep_csv("remove_ratio", points, temp_dir / "sparsity.csv")
        df = pd.read_csv(path)
        assert list(df.columns) == ["remove_ratio", "K", "recall", "ndcg"]
        assert df["remove_ratio"].tolist() == [0.0, 0.0, 0.2, 0.2, 0.4, 0.4]


class TestExcelRenderer:
    def test_render(self, temp_dir):
        table = pd.DataFrame(
            {"task": ["t", "t"], "metric": ["recall@10", "ndcg@10"], "full": [0.3, 0.1], "no_disen": [0.25, 0.12]}
        )
        p_values = pd.DataFrame(
            {"task": [None, None], "metric": [None, None], "full": [None, None], "no_disen": [0.01, 0.5]}
        )
        path = ExcelRenderer(temp_dir).render(table, "ablation", title="Ablation", p_values=p_values)
        assert path == temp_dir / "ablation.xlsx"
        with zipfile.ZipFile(path) as archive:
            names = archive.namelist()
            strings = archive.read("xl/sharedStrings.xml").decode("utf-8")
        assert "xl/worksheets/sheet1.xml" in names
        for text in ("Ablation", "recall@10", "no_disen"):
            assert text in strings


class TestFileRunStore:
    """Tests for run records on disk."""

    def test_record_round_trip(self, temp_dir):
        store = FileRunStore()
        record = RunRecord(run_id="run_t_s0_abcdef", task="t", seed=0)
        record.start()
        record.enter(RunStage.LOAD)
        record.add_artifact("kge", "kge/")
        store.save(record, temp_dir / "run")
        loaded = store.load(temp_dir / "run")
        assert loaded.status == RunStatus.RUNNING
        assert loaded.stage == RunStage.LOAD
        assert loaded.artifacts == {"kge": "kge/"}

    def test_missing_and_listing(self, temp_dir):
        store = FileRunStore()
        assert store.load(temp_dir / "absent") is None
        for seed in (1, 0):
            store.save(RunRecord(run_id=f"run_t_s{seed}_abcdef", task="t", seed=seed), temp_dir / f"seed_{seed}")
        assert [r.seed for r in store.list_runs(temp_dir)] == [0, 1]

    def test_manifest_is_stable(self, temp_dir):
        store = FileRunStore()
        store.save_manifest(temp_dir, {"b": 1, "a": {"y": 2, "x": 1}})
        text = (temp_dir / "run_manifest.json").read_text()
        assert text.index('"a"') < text.index('"b"')
        assert store.load_manifest(temp_dir) == {"a": {"x": 1, "y": 2}, "b": 1}
