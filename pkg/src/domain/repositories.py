"""
Domain Layer - Repository Interfaces

Abstract interfaces for artifact persistence.
Domain layer defines WHAT is stored,
Infrastructure layer provides HOW it is laid out on disk.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from pathlib import Path
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from .checkpoint import Checkpoint
    from .kge import KgeModel
    from .run import RunRecord


class CheckpointRepository(ABC):
    """
    Storage for training checkpoints.

    Infrastructure layer implements this with CheckpointStore.
    """

    @abstractmethod
    def save(self, ckpt: Checkpoint, path: Path) -> Path:
        """Write a checkpoint directory and return it."""
        ...

    @abstractmethod
    def load(self, path: Path) -> Checkpoint:
        """Read a checkpoint directory."""
        ...

    @abstractmethod
    def exists(self, path: Path) -> bool:
        """Check whether a complete checkpoint is stored at ``path``."""
        ...


class KgeModelRepository(ABC):
    """Storage for trained TransE models."""

    @abstractmethod
    def save(
        self,
        model: KgeModel,
        path: Path,
        seed: int,
        config: dict | None = None,
        kg_fingerprint: str | None = None,
    ) -> Path:
        ...

    @abstractmethod
    def load(self, path: Path) -> KgeModel:
        ...

    @abstractmethod
    def provenance(self, path: Path) -> dict[str, Any] | None:
        """The stored config and KG fingerprint, or None if nothing is stored."""
        ...


class RunRepository(ABC):
    """Storage for experiment run records."""

    @abstractmethod
    def save(self, record: RunRecord, run_dir: Path) -> Path:
        """Persist a run record beside the run's artifacts."""
        ...

    @abstractmethod
    def load(self, run_dir: Path) -> RunRecord | None:
        """Load a run record, or None if the directory has none."""
        ...

    @abstractmethod
    def list_runs(self, root: Path) -> list[RunRecord]:
        """All run records below ``root``."""
        ...
