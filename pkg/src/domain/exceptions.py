"""
Domain Layer - Exceptions

Errors raised by corpus loading, training, persistence and experiments.
Each subclasses the matching built-in so callers may catch either.
"""

from __future__ import annotations

from collections.abc import Iterable
from pathlib import Path


class KGBridgeError(Exception):
    """Base class for all project errors."""


class CorpusParseError(KGBridgeError, ValueError):
    """A TSV row could not be parsed."""

    def __init__(self, path: Path | str, line_no: int, reason: str) -> None:
        self.path = Path(path)
        self.line_no = line_no
        super().__init__(f"{self.path}: line {line_no}: {reason}")


class EmptyCorpusError(KGBridgeError, ValueError):
    """Loading produced no usable sequences or triples."""


class SequenceTooShortError(KGBridgeError, ValueError):
    """Leave-one-out needs at least three interactions per user."""

    def __init__(self, user_ids: Iterable[str]) -> None:
        self.user_ids = sorted(user_ids)
        shown = ", ".join(self.user_ids[:20])
        more = "" if len(self.user_ids) <= 20 else f" (+{len(self.user_ids) - 20} more)"
        super().__init__(f"Sequences shorter than 3 for users: {shown}{more}")


class EmptyVocabularyError(KGBridgeError, ValueError):
    """A prompt bank was requested from an empty relation vocabulary."""


class NumericError(KGBridgeError, ArithmeticError):
    """A value needed for a computation is undefined or non-finite."""


class TrainingDivergedError(KGBridgeError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, stage: str, epoch: int, step: int, loss: float) -> None:
        self.stage = stage
        self.epoch = epoch
        self.step = step
        super().__init__(
            f"{stage}: non-finite loss {loss!r} at epoch {epoch}, step {step}"
        )


class CheckpointLoadError(KGBridgeError, ValueError):
    """A persisted model directory is corrupt or inconsistent."""

    def __init__(self, path: Path | str, field: str, reason: str) -> None:
        self.path = Path(path)
        self.field = field
        super().__init__(f"{self.path}: field '{field}': {reason}")


class ExperimentStageError(KGBridgeError, RuntimeError):
    """A pipeline stage failed; partial artifacts are kept on disk."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"Stage '{stage}' failed: {cause}")
