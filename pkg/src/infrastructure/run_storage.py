"""
Infrastructure Layer - Run Storage

Run records and run manifests kept as JSON beside each run's artifacts.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from src.domain.repositories import RunRepository
from src.domain.run import RunRecord

logger = logging.getLogger(__name__)

RECORD_FILE = "run_record.json"
MANIFEST_FILE = "run_manifest.json"


class FileRunStore(RunRepository):
    """
    File-based run store.

    Layout per run:
    <out_dir>/<task>/seed_<n>/<variant>/
    ├── run_record.json
    ├── run_manifest.json
    ├── finetune/{last,best}/
    └── metrics.csv
    """

    def save(self, record: RunRecord, run_dir: Path) -> Path:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / RECORD_FILE
        with open(path, "w", encoding="utf-8") as f:
            json.dump(record.model_dump(mode="json"), f, indent=2, default=str)
        return path

    def load(self, run_dir: Path) -> RunRecord | None:
        path = Path(run_dir) / RECORD_FILE
        if not path.exists():
            return None
        try:
            with open(path, encoding="utf-8") as f:
                return RunRecord.model_validate(json.load(f))
        except Exception as e:
            logger.error(f"Error loading run record {path}: {e}")
            return None

    def list_runs(self, root: Path) -> list[RunRecord]:
        records: list[RunRecord] = []
        for path in sorted(Path(root).rglob(RECORD_FILE)):
            record = self.load(path.parent)
            if record is not None:
                records.append(record)
        return records

    def save_manifest(self, run_dir: Path, manifest: dict[str, Any]) -> Path:
        """Write the resolved-config manifest (sorted keys, stable formatting)."""
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / MANIFEST_FILE
        path.write_text(
            json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n", encoding="utf-8"
        )
        return path

    def load_manifest(self, run_dir: Path) -> dict[str, Any] | None:
        path = Path(run_dir) / MANIFEST_FILE
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))
