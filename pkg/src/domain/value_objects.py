"""
Domain Layer - Value Objects

Immutable identifiers and enumerations shared across the domain.
"""

from __future__ import annotations

import hashlib
import re
from enum import Enum
from typing import Any


class PromptKind(str, Enum):
    """Which relation vocabulary a prompt bank is built from."""

    SHARED = "shared"
    SPECIFIC = "specific"


class GeneratorStrategy(str, Enum):
    """Aggregation used to turn relation embeddings into a prompt bank."""

    MEAN_NOISE = "mean_noise"
    PLAIN_MEAN = "plain_mean"
    ATTENTION_POOL = "attention_pool"
    TRANSFORMER_POOL = "transformer_pool"


class TrainingStage(str, Enum):
    """Stage of the two-stage training paradigm."""

    PRETRAIN = "pretrain"
    FINETUNE = "finetune"


class AblationFlag(str, Enum):
    """Component switches for ablation variants."""

    NO_KG_INIT = "no_kg_init"  # Xavier-normal banks instead of relation init
    NO_SHARED = "no_shared"  # Xavier-normal shared bank
    NO_SPEC = "no_spec"  # Xavier-normal specific bank
    NO_DISEN = "no_disen"  # lambda term dropped while fine-tuning
    NO_FREEZE = "no_freeze"  # shared bank trainable while fine-tuning

    @property
    def affects_pretraining(self) -> bool:
        """True when the flag changes anything before fine-tuning starts."""
        return self in (
            AblationFlag.NO_KG_INIT,
            AblationFlag.NO_SHARED,
            AblationFlag.NO_SPEC,
        )

    @classmethod
    def parse_variant(cls, name: str) -> frozenset[AblationFlag]:
        """
        Parse a variant name into a flag set.

        ``full`` is the empty set; other names are ``+``-joined flags,
        e.g. ``no_disen+no_freeze``.
        """
        name = name.strip()
        if name == FULL_VARIANT:
            return frozenset()
        flags = set()
        for part in name.split("+"):
            try:
                flags.add(cls(part.strip()))
            except ValueError:
                valid = ", ".join([FULL_VARIANT, *(f.value for f in cls)])
                raise ValueError(
                    f"Unknown ablation flag '{part}'. Valid: {valid}"
                ) from None
        return frozenset(flags)


FULL_VARIANT = "full"


def variant_name(flags: frozenset[AblationFlag]) -> str:
    """Canonical variant name for a flag set (inverse of parse_variant)."""
    if not flags:
        return FULL_VARIANT
    return "+".join(sorted(f.value for f in flags))


class EvalPhase(str, Enum):
    """Which held-out target is ranked."""

    VALID = "valid"
    TEST = "test"


class RunId:
    """
    Value Object for an experiment run identifier.

    Format: run_{task}_s{seed}_{hash6}, where the hash covers the variant
    label so ablation and sweep runs of one task never collide.
    """

    __slots__ = ("_value",)

    def __init__(self, value: str) -> None:
        if not self._is_valid(value):
            raise ValueError(f"Invalid run_id format: {value}")
        self._value = value

    @staticmethod
    def _is_valid(value: str) -> bool:
        if not value:
            return False
        return bool(re.match(r"^run_[a-z0-9_]+_s\d+_[0-9a-f]{6}$", value))

    @classmethod
    def generate(cls, task: str, seed: int, variant: str = FULL_VARIANT) -> RunId:
        """Generate a RunId from task name, seed and variant label."""
        name = re.sub(r"[^a-z0-9]", "_", task.lower())[:30].strip("_") or "task"
        digest = hashlib.md5(f"{task}|{seed}|{variant}".encode()).hexdigest()[:6]
        return cls(f"run_{name}_s{seed}_{digest}")

    @property
    def value(self) -> str:
        return self._value

    def __str__(self) -> str:
        return self._value

    def __repr__(self) -> str:
        return f"RunId({self._value!r})"

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, RunId):
            return self._value == other._value
        if isinstance(other, str):
            return self._value == other
        return False

    def __hash__(self) -> int:
        return hash(self._value)


def derive_seed(seed: int, *purpose: object) -> int:
    """
    Independent 63-bit seed for one purpose of one run.

    ``derive_seed(3, "pretrain", 7, "shuffle")`` is stable across processes,
    so each (stage, epoch, purpose) stream can be recreated on resume.
    """
    key = "|".join(str(p) for p in (seed, *purpose))
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big") >> 1
