"""
Domain Layer - Checkpoint

Everything needed to resume or evaluate one training stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import torch

from .prompt_bank import PromptBank
from .seqmodel import ItemVocabulary, KGBridgeModel
from .value_objects import TrainingStage


@dataclass
class Checkpoint:
    """
    Model, optimizer and early-stopping state after ``epoch`` finished epochs.

    ``trainable`` lists the parameter names handed to the optimizer, in
    optimizer order; ``optimizer_state`` is that optimizer's state dict.
    """

    stage: TrainingStage
    model: KGBridgeModel
    vocab: ItemVocabulary
    epoch: int = 0
    best_epoch: int = 0
    best_valid_metric: float = float("-inf")
    epochs_without_improvement: int = 0
    loss_history: list[float] = field(default_factory=list)
    valid_history: list[float] = field(default_factory=list)
    trainable: list[str] = field(default_factory=list)
    optimizer_state: dict[str, Any] | None = None
    rng_state: torch.Tensor = field(default_factory=torch.get_rng_state)
    train_config: dict[str, Any] = field(default_factory=dict)
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def shared_bank(self) -> PromptBank:
        return self.model.shared_bank

    @property
    def spec_bank(self) -> PromptBank:
        return self.model.spec_bank
