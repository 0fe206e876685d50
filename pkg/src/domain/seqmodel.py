"""
Domain Layer - Prompt-Enriched Sequence Model

Item/position embedding, prompt–item attention fusion, a causal transformer
encoder and a full-vocabulary linear head.

Batches are left-padded with the reserved item index 0. Positions are
counted from each row's first real item. The composed passes encode each
group of equal-length rows on its unpadded tail, so left-padding changes
nothing for the real positions, down to the last bit.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator
from torch import nn

from .entities import DatasetSplit
from .exceptions import NumericError
from .prompt_bank import PromptBank

logger = logging.getLogger(__name__)

PAD_INDEX = 0


class ModelConfig(BaseModel):
    """Sequence model shape and regularization."""

    dim: int = Field(100, ge=1, description="Hidden size d")
    max_seq_len: int = Field(15, ge=1, description="N_max, most recent items kept")
    n_layers: int = Field(2, ge=1, description="Transformer layers")
    n_heads: int = Field(2, ge=1, description="Attention heads")
    ff_multiplier: int = Field(4, ge=1, description="Feed-forward width / d")
    dropout: float = Field(0.2, ge=0.0, le=0.5, description="Dropout rate")

    @model_validator(mode="after")
    def _heads_divide_dim(self) -> ModelConfig:
        if self.dim % self.n_heads:
            raise ValueError(f"dim ({self.dim}) must be divisible by n_heads ({self.n_heads})")
        return self


# ============================================================================
# Item Vocabulary and Batches
# ============================================================================


@dataclass(frozen=True)
class ItemVocabulary:
    """
    Joint item index over all domains.

    Keys are (domain, item) so equal raw ids in different domains stay
    distinct. Index 0 is padding; item ``k`` is scored by head class ``k-1``.
    """

    keys: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {k: i + 1 for i, k in enumerate(self.keys)})

    @classmethod
    def from_splits(cls, splits: Mapping[str, DatasetSplit]) -> ItemVocabulary:
        return cls(
            keys=tuple((d, item) for d in sorted(splits) for item in splits[d].item_vocab)
        )

    def __len__(self) -> int:
        return len(self.keys)

    def index(self, domain: str, item: str) -> int:
        return self._index[(domain, item)]  # type: ignore[attr-defined]

    def encode(self, domain: str, items: Sequence[str]) -> list[int]:
        return [self.index(domain, i) for i in items]

    def domain_indices(self, domain: str) -> list[int]:
        return [i + 1 for i, (d, _) in enumerate(self.keys) if d == domain]

    def candidate_mask(self, domain: str | None = None) -> torch.Tensor:
        """Boolean mask over head classes; ``None`` selects every item."""
        if domain is None:
            return torch.ones(len(self.keys), dtype=torch.bool)
        return torch.tensor([d == domain for d, _ in self.keys], dtype=torch.bool)


@dataclass
class SequenceBatch:
    """
    Left-padded item index matrix.

    Attributes:
        item_ids: B×N item indices, 0 at padding
        padding_mask: B×N, True at real items
        targets: B next-item indices after the last position (optional)
        position_targets: B×N next-item index per position, 0 = no target
    """

    item_ids: torch.Tensor
    padding_mask: torch.Tensor
    targets: torch.Tensor | None = None
    position_targets: torch.Tensor | None = None

    def __post_init__(self) -> None:
        if self.item_ids.shape != self.padding_mask.shape:
            raise ValueError(
                f"item_ids {tuple(self.item_ids.shape)} and padding_mask "
                f"{tuple(self.padding_mask.shape)} differ"
            )

    def __len__(self) -> int:
        return self.item_ids.shape[0]


def _left_pad(rows: Sequence[Sequence[int]], width: int) -> torch.Tensor:
    out = torch.full((len(rows), width), PAD_INDEX, dtype=torch.long)
    for b, row in enumerate(rows):
        if row:
            out[b, width - len(row) :] = torch.tensor(row, dtype=torch.long)
    return out


def build_sequence_batch(
    item_lists: Sequence[Sequence[int]],
    max_len: int,
    targets: Sequence[int] | None = None,
) -> SequenceBatch:
    """
    Truncate to the most recent ``max_len`` items and left-pad.

    Args:
        item_lists: Non-empty item index lists
        max_len: N_max
        targets: Optional next item per row

    Returns:
        SequenceBatch with N = longest kept row
    """
    if any(len(items) == 0 for items in item_lists):
        raise ValueError("Every row needs at least one real item")
    kept = [list(items)[-max_len:] for items in item_lists]
    width = max(len(r) for r in kept)
    ids = _left_pad(kept, width)
    target_tensor = None if targets is None else torch.tensor(list(targets), dtype=torch.long)
    return SequenceBatch(item_ids=ids, padding_mask=ids != PAD_INDEX, targets=target_tensor)


def build_training_batch(sequences: Sequence[Sequence[int]], max_len: int) -> SequenceBatch:
    """
    Next-item training rows: input ``s[:-1]`` predicts ``s[1:]`` at every position.

    Sequences need at least two items; only the most recent ``max_len``
    input/target pairs are kept.
    """
    if any(len(s) < 2 for s in sequences):
        raise ValueError("Training sequences need at least two items")
    inputs = [list(s[:-1])[-max_len:] for s in sequences]
    outputs = [list(s[1:])[-max_len:] for s in sequences]
    width = max(len(r) for r in inputs)
    ids = _left_pad(inputs, width)
    return SequenceBatch(
        item_ids=ids,
        padding_mask=ids != PAD_INDEX,
        targets=torch.tensor([s[-1] for s in sequences], dtype=torch.long),
        position_targets=_left_pad(outputs, width),
    )


# ============================================================================
# Model
# ============================================================================


class KGBridgeModel(nn.Module):
    """Prompt-enriched causal transformer over the joint item vocabulary."""

    def __init__(
        self,
        cfg: ModelConfig,
        n_items: int,
        shared_bank: PromptBank,
        spec_bank: PromptBank,
    ) -> None:
        super().__init__()
        if n_items < 1:
            raise ValueError("Item vocabulary is empty")
        for bank in (shared_bank, spec_bank):
            if bank.dim != cfg.dim:
                raise ValueError(
                    f"{bank.kind.value} bank has d={bank.dim}, model expects d={cfg.dim}"
                )
        if shared_bank.prompt_len != spec_bank.prompt_len:
            raise ValueError(
                f"Bank lengths differ: shared L={shared_bank.prompt_len}, "
                f"specific L={spec_bank.prompt_len}"
            )

        d = cfg.dim
        self.cfg = cfg
        self.n_items = n_items
        self.shared_bank = shared_bank
        self.spec_bank = spec_bank

        self.item_emb = nn.Embedding(n_items + 1, d, padding_idx=PAD_INDEX)
        self.pos_emb = nn.Embedding(cfg.max_seq_len, d)
        self.emb_dropout = nn.Dropout(cfg.dropout)
        self.attn_net = nn.Sequential(nn.Linear(2 * d, d), nn.ReLU(), nn.Linear(d, 1))
        layer = nn.TransformerEncoderLayer(
            d_model=d,
            nhead=cfg.n_heads,
            dim_feedforward=cfg.ff_multiplier * d,
            dropout=cfg.dropout,
            activation="relu",
            batch_first=True,
            norm_first=False,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=cfg.n_layers, enable_nested_tensor=False
        )
        self.head = nn.Linear(d, n_items)
        self._init_weights()

    def _init_weights(self) -> None:
        for module in (self.item_emb, self.pos_emb):
            nn.init.normal_(module.weight, mean=0.0, std=0.02)
        with torch.no_grad():
            self.item_emb.weight[PAD_INDEX].zero_()
        nn.init.normal_(self.head.weight, mean=0.0, std=0.02)
        nn.init.zeros_(self.head.bias)

    def set_dropout(self, rate: float) -> None:
        """Override every dropout rate (stage-specific regularization)."""
        for module in self.modules():
            if isinstance(module, nn.Dropout):
                module.p = rate
        for layer in self.encoder.layers:
            layer.self_attn.dropout = rate

    # ------------------------------------------------------------------
    # Forward pieces
    # ------------------------------------------------------------------

    def embed_sequence(self, batch: SequenceBatch) -> torch.Tensor:
        """E = ItemEmb(ids) + PosEmb(positions), padding rows zeroed."""
        ids, mask = batch.item_ids, batch.padding_mask
        n = ids.shape[1]
        if n > self.cfg.max_seq_len:
            raise ValueError(f"Sequence length {n} exceeds max_seq_len {self.cfg.max_seq_len}")
        if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) > self.n_items):
            raise IndexError(f"Item index out of range [0, {self.n_items}]")

        first_real = n - mask.sum(dim=1, keepdim=True)
        positions = (torch.arange(n).unsqueeze(0) - first_real).clamp(min=0)
        embedded = self.item_emb(ids) + self.pos_emb(positions)
        embedded = self.emb_dropout(embedded)
        return embedded * mask.unsqueeze(-1).to(embedded.dtype)

    def enrich_items(
        self,
        embedded: torch.Tensor,
        padding_mask: torch.Tensor,
        return_weights: bool = False,
    ) -> torch.Tensor | tuple[torch.Tensor, torch.Tensor]:
        """
        Fuse each item with both prompt banks by attention.

        Context per position is [P_shared; P_spec; e_i] (2L+1 slots), scored
        by f_att([x_j; e_i]) and combined with softmax weights.
        """
        prompts = torch.cat([self.shared_bank.values, self.spec_bank.values], dim=0)
        if embedded.shape[-1] != prompts.shape[-1]:
            raise ValueError(
                f"Embedding d={embedded.shape[-1]} does not match prompt d={prompts.shape[-1]}"
            )
        b, n, d = embedded.shape
        context = torch.cat(
            [prompts.expand(b, n, *prompts.shape), embedded.unsqueeze(2)], dim=2
        )
        query = embedded.unsqueeze(2).expand_as(context)
        scores = self.attn_net(torch.cat([context, query], dim=-1)).squeeze(-1)
        weights = torch.softmax(scores, dim=-1)
        enriched = (weights.unsqueeze(-1) * context).sum(dim=2)
        enriched = enriched * padding_mask.unsqueeze(-1).to(enriched.dtype)
        if return_weights:
            return enriched, weights
        return enriched

    def attention_mask(self, padding_mask: torch.Tensor) -> torch.Tensor:
        """Float mask (B·heads, N, N): causal over real keys, self-only for padding."""
        n = padding_mask.shape[1]
        causal = torch.ones(n, n, dtype=torch.bool).tril()
        allowed = causal.unsqueeze(0) & padding_mask.unsqueeze(1)
        allowed = allowed | torch.eye(n, dtype=torch.bool).unsqueeze(0)
        mask = torch.zeros(allowed.shape, dtype=self.head.weight.dtype)
        mask = mask.masked_fill(~allowed, float("-inf"))
        return mask.repeat_interleave(self.cfg.n_heads, dim=0)

    def encode_sequence(
        self, enriched: torch.Tensor, padding_mask: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """
        Causal self-attention over enriched items.

        Returns:
            (hidden B×N×d, z_u B×d at the last position)
        """
        if not bool(padding_mask.any(dim=1).all()):
            raise ValueError("Every row needs at least one real item")
        hidden = self.encoder(enriched, mask=self.attention_mask(padding_mask))
        return hidden, hidden[:, -1]

    def logits(self, z: torch.Tensor, candidate_mask: torch.Tensor | None = None) -> torch.Tensor:
        """o = W·z + b, with non-candidates set to −inf."""
        out = self.head(z)
        if candidate_mask is not None:
            out = out.masked_fill(~candidate_mask, float("-inf"))
        return out

    def predict_distribution(
        self, z: torch.Tensor, candidate_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Softmax over (candidate) items; each row sums to 1."""
        out = self.logits(z, candidate_mask)
        visible = out if candidate_mask is None else out[..., candidate_mask]
        if not bool(torch.isfinite(visible).all()):
            raise NumericError("Non-finite logits in prediction head")
        return torch.softmax(out, dim=-1)

    # ------------------------------------------------------------------
    # Composed passes
    # ------------------------------------------------------------------

    def _length_groups(
        self, batch: SequenceBatch
    ) -> Iterator[tuple[torch.Tensor, SequenceBatch]]:
        """Yield (row indices, unpadded tail batch) per distinct real length."""
        lengths = batch.padding_mask.sum(dim=1)
        if not bool((lengths > 0).all()):
            raise ValueError("Every row needs at least one real item")
        n = batch.item_ids.shape[1]
        for length in sorted(set(lengths.tolist())):
            rows = (lengths == length).nonzero(as_tuple=True)[0]
            tail_mask = batch.padding_mask[rows, n - length :]
            if not bool(tail_mask.all()):
                raise ValueError("Batch rows must be left-padded")
            tail_ids = batch.item_ids[rows, n - length :]
            yield rows, SequenceBatch(item_ids=tail_ids, padding_mask=tail_mask)

    def _dense_hidden(self, batch: SequenceBatch) -> torch.Tensor:
        embedded = self.embed_sequence(batch)
        enriched = self.enrich_items(embedded, batch.padding_mask)
        hidden, _ = self.encode_sequence(enriched, batch.padding_mask)  # type: ignore[arg-type]
        return hidden

    def hidden_states(self, batch: SequenceBatch) -> torch.Tensor:
        """
        Hidden states B×N×d; padding positions are zero.

        Rows are encoded at their own length, so a row's output does not
        depend on how far the batch pads it.
        """
        b, n = batch.item_ids.shape
        hidden = torch.zeros(b, n, self.cfg.dim, dtype=self.head.weight.dtype)
        for rows, tail in self._length_groups(batch):
            hidden[rows, n - tail.item_ids.shape[1] :] = self._dense_hidden(tail)
        return hidden

    def forward(
        self, batch: SequenceBatch, candidate_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Per-position logits B×N×|V|."""
        return self.logits(self.hidden_states(batch), candidate_mask)

    def score_last(
        self, batch: SequenceBatch, candidate_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Logits at the last position, B×|V|, computed per length group."""
        scores = torch.empty(len(batch), self.n_items, dtype=self.head.weight.dtype)
        for rows, tail in self._length_groups(batch):
            scores[rows] = self.logits(self._dense_hidden(tail)[:, -1], candidate_mask)
        return scores


def build_model(
    cfg: ModelConfig,
    n_items: int,
    shared_bank: PromptBank,
    spec_bank: PromptBank,
    seed: int,
) -> KGBridgeModel:
    """Construct a model whose initialization depends only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = KGBridgeModel(cfg, n_items, shared_bank, spec_bank)
    logger.info(
        f"Model: |V|={n_items}, d={cfg.dim}, layers={cfg.n_layers}, heads={cfg.n_heads}, "
        f"L={shared_bank.prompt_len}"
    )
    return model


def masked_cross_entropy(logits: torch.Tensor, position_targets: torch.Tensor) -> torch.Tensor:
    """
    Mean next-item cross-entropy over positions with a real target.

    ``position_targets`` uses item indices (0 = none); head class is index − 1.
    """
    flat_logits = logits.reshape(-1, logits.shape[-1])
    flat_targets = position_targets.reshape(-1)
    real = flat_targets != PAD_INDEX
    if not bool(real.any()):
        raise ValueError("Batch has no real targets")
    return F.cross_entropy(flat_logits[real], flat_targets[real] - 1)
