"""
Domain Layer - Prompt Banks

Turns a variable-sized relation embedding matrix into a fixed L×d bank of
soft prompts. The generator runs once at initialization; afterwards the bank
rows are free parameters owned by the optimizer.
"""

from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field
from torch import nn

from .exceptions import EmptyVocabularyError
from .value_objects import GeneratorStrategy, PromptKind

logger = logging.getLogger(__name__)


class PromptGeneratorConfig(BaseModel):
    """How prompt banks are initialized from relation embeddings."""

    strategy: GeneratorStrategy = Field(
        GeneratorStrategy.MEAN_NOISE, description="Aggregation strategy"
    )
    prompt_len: int = Field(2, ge=1, description="Prompts per bank (L)")
    noise_sigma: float = Field(0.01, ge=0.0, description="Per-row noise std")
    seed: int = Field(0, description="Noise seed")


class PromptBank(nn.Module):
    """
    A learnable L×d matrix of soft prompts.

    Freezing toggles ``requires_grad``; the training loop leaves frozen
    banks out of the optimizer, so their values never change.
    """

    def __init__(self, kind: PromptKind, values: torch.Tensor) -> None:
        super().__init__()
        if values.dim() != 2:
            raise ValueError(f"Prompt bank must be 2-D, got shape {tuple(values.shape)}")
        self.kind = PromptKind(kind)
        self.values = nn.Parameter(values.detach().clone())

    @property
    def prompt_len(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def frozen(self) -> bool:
        return not self.values.requires_grad

    def freeze(self) -> None:
        self.values.requires_grad_(False)

    def unfreeze(self) -> None:
        self.values.requires_grad_(True)

    @classmethod
    def xavier_normal(
        cls, kind: PromptKind, prompt_len: int, dim: int, generator: torch.Generator
    ) -> PromptBank:
        """Bank drawn from a Xavier-normal distribution (no KG guidance)."""
        values = torch.empty(prompt_len, dim)
        nn.init.xavier_normal_(values, generator=generator)
        return cls(kind, values)

    def extra_repr(self) -> str:
        return f"kind={self.kind.value}, L={self.prompt_len}, d={self.dim}, frozen={self.frozen}"


# ============================================================================
# Generator Strategies
# ============================================================================


class PromptGenerator(ABC):
    """Aggregate an n×d relation matrix (n ≥ 1) into L×d prompts."""

    @abstractmethod
    def aggregate(
        self, relations: torch.Tensor, prompt_len: int, generator: torch.Generator
    ) -> torch.Tensor:
        pass

    @staticmethod
    def add_noise(
        rows: torch.Tensor, sigma: float, generator: torch.Generator
    ) -> torch.Tensor:
        """Independent N(0, σ²I) perturbation per row; exact no-op at σ=0."""
        if sigma == 0.0:
            return rows
        noise = torch.randn(rows.shape, generator=generator, dtype=rows.dtype)
        return rows + sigma * noise


class MeanNoiseGenerator(PromptGenerator):
    """
    Mean pooling through an identity-initialized affine map plus noise.

    ``W_g`` starts at the identity and ``b_g`` at zero; both are used only
    here, the bank rows are what training updates.
    """

    def __init__(self, noise_sigma: float = 0.01) -> None:
        self.noise_sigma = noise_sigma

    def aggregate(
        self, relations: torch.Tensor, prompt_len: int, generator: torch.Generator
    ) -> torch.Tensor:
        d = relations.shape[1]
        weight = torch.eye(d, dtype=relations.dtype)
        bias = torch.zeros(d, dtype=relations.dtype)
        pooled = F.linear(relations.mean(dim=0), weight, bias)
        rows = pooled.unsqueeze(0).expand(prompt_len, d).clone()
        return self.add_noise(rows, self.noise_sigma, generator)


class PlainMeanGenerator(PromptGenerator):
    """Column-wise mean repeated L times."""

    def aggregate(
        self, relations: torch.Tensor, prompt_len: int, generator: torch.Generator
    ) -> torch.Tensor:
        return relations.mean(dim=0).unsqueeze(0).repeat(prompt_len, 1)


class AttentionPoolGenerator(PromptGenerator):
    """L independent score heads, each a softmax over relation rows."""

    def __init__(self, noise_sigma: float = 0.01) -> None:
        self.noise_sigma = noise_sigma

    def aggregate(
        self, relations: torch.Tensor, prompt_len: int, generator: torch.Generator
    ) -> torch.Tensor:
        d = relations.shape[1]
        heads = torch.randn(d, prompt_len, generator=generator, dtype=relations.dtype)
        scores = relations @ heads / math.sqrt(d)  # n × L
        alpha = torch.softmax(scores, dim=0)
        rows = alpha.transpose(0, 1) @ relations
        return self.add_noise(rows, self.noise_sigma, generator)


class TransformerPoolGenerator(PromptGenerator):
    """One self-attention layer over relation rows, then a mean per prompt head."""

    def __init__(self, noise_sigma: float = 0.01) -> None:
        self.noise_sigma = noise_sigma

    def _near_identity(
        self, d: int, generator: torch.Generator, dtype: torch.dtype
    ) -> torch.Tensor:
        jitter = torch.randn(d, d, generator=generator, dtype=dtype) / math.sqrt(d)
        return torch.eye(d, dtype=dtype) + 0.1 * jitter

    def aggregate(
        self, relations: torch.Tensor, prompt_len: int, generator: torch.Generator
    ) -> torch.Tensor:
        d = relations.shape[1]
        q = relations @ self._near_identity(d, generator, relations.dtype)
        k = relations @ self._near_identity(d, generator, relations.dtype)
        v = relations @ self._near_identity(d, generator, relations.dtype)
        attn = torch.softmax(q @ k.transpose(0, 1) / math.sqrt(d), dim=-1)
        hidden = relations + attn @ v
        rows = torch.stack(
            [
                (hidden @ self._near_identity(d, generator, relations.dtype)).mean(dim=0)
                for _ in range(prompt_len)
            ]
        )
        return self.add_noise(rows, self.noise_sigma, generator)


def get_prompt_generator(cfg: PromptGeneratorConfig) -> PromptGenerator:
    """
    Get a prompt generator by strategy.

    Args:
        cfg: Generator configuration

    Returns:
        PromptGenerator instance
    """
    strategy = GeneratorStrategy(cfg.strategy)
    if strategy is GeneratorStrategy.PLAIN_MEAN:
        return PlainMeanGenerator()
    if strategy is GeneratorStrategy.ATTENTION_POOL:
        return AttentionPoolGenerator(cfg.noise_sigma)
    if strategy is GeneratorStrategy.TRANSFORMER_POOL:
        return TransformerPoolGenerator(cfg.noise_sigma)
    return MeanNoiseGenerator(cfg.noise_sigma)


# ============================================================================
# Bank Construction
# ============================================================================


def _bank_generator(seed: int, kind: PromptKind) -> torch.Generator:
    offset = 0 if kind is PromptKind.SHARED else 1
    return torch.Generator().manual_seed(2 * seed + offset)


def generate_prompt_bank(
    relations: torch.Tensor,
    cfg: PromptGeneratorConfig,
    kind: PromptKind,
    shared_relations: torch.Tensor | None = None,
) -> PromptBank:
    """
    Build a learnable prompt bank from relation embeddings.

    Args:
        relations: n×d relation matrix of this bank's vocabulary
        cfg: Generator configuration
        kind: Shared or specific bank
        shared_relations: Fallback source for an empty specific vocabulary

    Returns:
        Unfrozen PromptBank of shape L×d
    """
    kind = PromptKind(kind)
    if relations.dim() != 2:
        raise ValueError(f"relations must be n×d, got shape {tuple(relations.shape)}")
    generator = _bank_generator(cfg.seed, kind)

    if relations.shape[0] == 0:
        if kind is PromptKind.SHARED:
            raise EmptyVocabularyError("Shared prompt bank needs at least one relation")
        if shared_relations is None or shared_relations.shape[0] == 0:
            raise EmptyVocabularyError(
                "Specific vocabulary is empty and no shared relations to fall back on"
            )
        logger.warning("Specific vocabulary is empty; initializing from the shared mean")
        rows = PlainMeanGenerator().aggregate(shared_relations, cfg.prompt_len, generator)
        return PromptBank(kind, PromptGenerator.add_noise(rows, cfg.noise_sigma, generator))

    rows = get_prompt_generator(cfg).aggregate(relations, cfg.prompt_len, generator)
    return PromptBank(kind, rows)
