"""
Domain Layer - Run Entities

Experiment run records: status, stage progress, artifacts and failure info.
"""

from __future__ import annotations

from datetime import datetime
from enum import Enum
from typing import Any

from pydantic import BaseModel, Field


class RunStatus(str, Enum):
    """Run status enumeration."""

    PENDING = "pending"  # Created, nothing executed yet
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"  # A stage raised; partial artifacts kept


class RunStage(str, Enum):
    """Pipeline stages in execution order."""

    LOAD = "load"
    PARTITION = "partition"
    KGE = "kge"
    PROMPT_INIT = "prompt_init"
    PRETRAIN = "pretrain"
    FINETUNE = "finetune"
    EVALUATE = "evaluate"


class RunRecord(BaseModel):
    """
    Experiment Run Entity.

    One (task, seed, variant) execution of the pipeline.
    """

    run_id: str = Field(..., description="Unique run identifier")
    task: str = Field(..., description="Task name, e.g. movie_to_book")
    seed: int = Field(..., description="Run seed")
    variant: str = Field("full", description="Ablation variant or sweep label")
    status: RunStatus = Field(default=RunStatus.PENDING, description="Current status")

    stage: RunStage | None = Field(None, description="Stage being executed")
    completed_stages: list[RunStage] = Field(default_factory=list)
    failed_stage: RunStage | None = Field(None, description="Stage that raised")
    error: str | None = Field(None, description="Error message if failed")

    artifacts: dict[str, str] = Field(
        default_factory=dict, description="Artifact name → path"
    )
    result: dict[str, Any] | None = Field(None, description="Final metrics and notes")

    created_at: datetime = Field(default_factory=datetime.now)
    started_at: datetime | None = None
    completed_at: datetime | None = None

    @property
    def is_terminal(self) -> bool:
        return self.status in (RunStatus.COMPLETED, RunStatus.FAILED)

    @property
    def duration_seconds(self) -> float | None:
        if self.started_at is None:
            return None
        end_time = self.completed_at or datetime.now()
        return (end_time - self.started_at).total_seconds()

    def start(self) -> None:
        self.status = RunStatus.RUNNING
        self.started_at = datetime.now()

    def enter(self, stage: RunStage) -> None:
        """Mark ``stage`` as the one being executed."""
        if self.stage is not None and self.stage not in self.completed_stages:
            self.completed_stages.append(self.stage)
        self.stage = stage

    def add_artifact(self, name: str, path: str) -> None:
        self.artifacts[name] = path

    def complete(self, result: dict[str, Any] | None = None) -> None:
        if self.stage is not None and self.stage not in self.completed_stages:
            self.completed_stages.append(self.stage)
        self.stage = None
        self.status = RunStatus.COMPLETED
        self.completed_at = datetime.now()
        self.result = result

    def fail(self, error: str) -> None:
        self.status = RunStatus.FAILED
        self.failed_stage = self.stage
        self.completed_at = datetime.now()
        self.error = error
