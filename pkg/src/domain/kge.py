"""
Domain Layer - Knowledge Graph Embedding

TransE entity/relation embeddings trained with a margin ranking loss and
uniform head/tail corruption. Only the relation matrices feed the prompt
banks downstream.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field
from torch import nn

from .entities import KnowledgeGraph, RelationPartition, Triple
from .exceptions import EmptyCorpusError

logger = logging.getLogger(__name__)

MAX_NEGATIVE_RETRIES = 10


class KgeConfig(BaseModel):
    """TransE hyper-parameters."""

    dim: int = Field(100, ge=1, description="Embedding dimension d")
    margin: float = Field(1.0, ge=0.0, description="Hinge margin gamma")
    learning_rate: float = Field(0.01, gt=0.0, description="SGD step size")
    epochs: int = Field(200, ge=0, description="Passes over the triples")
    batch_size: int = Field(128, ge=1, description="Positives per SGD step")
    negatives_per_positive: int = Field(1, ge=1, description="Corruptions per fact")
    seed: int = Field(0, description="Initialization and sampling seed")


class KgeModel(nn.Module):
    """
    TransE embedding tables with their id orderings.

    Entity and relation rows follow the lexicographic order of their ids.
    """

    def __init__(
        self,
        entity_ids: Sequence[str],
        relation_ids: Sequence[str],
        dim: int,
        generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        self.entity_index = {e: i for i, e in enumerate(entity_ids)}
        self.relation_index = {r: i for i, r in enumerate(relation_ids)}
        self.dim = dim
        self.entity_emb = nn.Embedding(len(entity_ids), dim)
        self.relation_emb = nn.Embedding(len(relation_ids), dim)
        self.loss_history: list[float] = []

        bound = 6.0 / math.sqrt(dim)
        with torch.no_grad():
            self.entity_emb.weight.uniform_(-bound, bound, generator=generator)
            self.relation_emb.weight.uniform_(-bound, bound, generator=generator)

    @property
    def entity_ids(self) -> list[str]:
        return list(self.entity_index)

    @property
    def relation_ids(self) -> list[str]:
        return list(self.relation_index)

    def encode(self, triples: Sequence[Triple]) -> torch.Tensor:
        """Map triples to an (n, 3) index tensor; unknown ids raise KeyError."""
        rows = []
        for t in triples:
            try:
                rows.append(
                    (
                        self.entity_index[t.head],
                        self.relation_index[t.relation],
                        self.entity_index[t.tail],
                    )
                )
            except KeyError as e:
                raise KeyError(f"Unknown id in triple {t}: {e.args[0]}") from None
        return torch.tensor(rows, dtype=torch.long).reshape(-1, 3)

    def distance(self, index: torch.Tensor) -> torch.Tensor:
        """‖h + r − o‖₂ for each row of an (n, 3) index tensor."""
        h = self.entity_emb(index[:, 0])
        r = self.relation_emb(index[:, 1])
        o = self.entity_emb(index[:, 2])
        return torch.linalg.vector_norm(h + r - o, ord=2, dim=-1)

    @torch.no_grad()
    def normalize_entities(self) -> None:
        """Project entity rows onto the unit sphere."""
        weight = self.entity_emb.weight
        norms = torch.linalg.vector_norm(weight, dim=1, keepdim=True).clamp_min(1e-12)
        weight.div_(norms)


# ============================================================================
# Scoring and Loss
# ============================================================================


def score_triple(model: KgeModel, t: Triple) -> float:
    """Translational distance ‖h + r − o‖₂ of one triple."""
    with torch.no_grad():
        return float(model.distance(model.encode([t]))[0])


def hinge(
    pos_distance: torch.Tensor, neg_distance: torch.Tensor, margin: float
) -> torch.Tensor:
    """Σ [γ + d⁺ − d⁻]₊ with zero subgradient at the kink."""
    return F.relu(margin + pos_distance - neg_distance).sum()


def transe_loss(
    model: KgeModel,
    positives: Sequence[Triple] | torch.Tensor,
    negatives: Sequence[Triple] | torch.Tensor,
    margin: float,
) -> torch.Tensor:
    """
    Margin ranking loss over index-aligned positive/negative pairs.

    Args:
        model: Embedding tables
        positives: Observed triples (or an (n, 3) index tensor)
        negatives: Corruptions, ``negatives[i]`` corrupts ``positives[i]``
        margin: Hinge margin gamma

    Returns:
        Scalar tensor; differentiable w.r.t. the embeddings
    """
    pos = positives if isinstance(positives, torch.Tensor) else model.encode(positives)
    neg = negatives if isinstance(negatives, torch.Tensor) else model.encode(negatives)
    if pos.shape[0] != neg.shape[0]:
        raise ValueError(
            f"positives ({pos.shape[0]}) and negatives ({neg.shape[0]}) must align"
        )
    return hinge(model.distance(pos), model.distance(neg), margin)


# ============================================================================
# Negative Sampling
# ============================================================================


def _triple_keys(index: torch.Tensor, n_entities: int, n_relations: int) -> torch.Tensor:
    return (index[:, 0] * n_relations + index[:, 1]) * n_entities + index[:, 2]


def sample_negatives(
    positives: torch.Tensor,
    n_entities: int,
    n_relations: int,
    observed_keys: torch.Tensor,
    generator: torch.Generator,
) -> torch.Tensor:
    """
    Corrupt head or tail (probability ½ each) with a uniform entity.

    Corruptions that hit an observed triple are redrawn, at most
    ``MAX_NEGATIVE_RETRIES`` times.
    """
    negatives = positives.clone()
    pending = torch.ones(len(positives), dtype=torch.bool)
    corrupt_head = torch.rand(len(positives), generator=generator) < 0.5

    for _ in range(MAX_NEGATIVE_RETRIES + 1):
        rows = pending.nonzero(as_tuple=True)[0]
        if len(rows) == 0:
            break
        replacement = torch.randint(n_entities, (len(rows),), generator=generator)
        column = torch.where(corrupt_head[rows], 0, 2)
        negatives[rows, column] = replacement
        keys = _triple_keys(negatives[rows], n_entities, n_relations)
        pending[rows] = torch.isin(keys, observed_keys)
    return negatives


# ============================================================================
# Training and Export
# ============================================================================


def train_kge(kg: KnowledgeGraph, cfg: KgeConfig) -> KgeModel:
    """
    Fit TransE by minibatch SGD on the margin loss.

    Entity rows are L2-normalized after every epoch. Identical seeds give
    bit-identical models.
    """
    if not kg.triples:
        raise EmptyCorpusError("Cannot train TransE on an empty KG")

    generator = torch.Generator().manual_seed(cfg.seed)
    model = KgeModel(sorted(kg.entities), sorted(kg.relations), cfg.dim, generator)
    positives = model.encode(kg.triples)
    n_entities, n_relations = len(model.entity_index), len(model.relation_index)
    observed = torch.sort(_triple_keys(positives, n_entities, n_relations)).values

    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)
    logger.info(
        f"TransE: {len(positives)} triples, {n_entities} entities, "
        f"{n_relations} relations, d={cfg.dim}, {cfg.epochs} epochs"
    )

    for epoch in range(cfg.epochs):
        order = torch.randperm(len(positives), generator=generator)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = positives[order[start : start + cfg.batch_size]]
            batch = batch.repeat(cfg.negatives_per_positive, 1)
            negatives = sample_negatives(
                batch, n_entities, n_relations, observed, generator
            )
            optimizer.zero_grad()
            loss = transe_loss(model, batch, negatives, cfg.margin)
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
        model.normalize_entities()
        model.loss_history.append(epoch_loss)
        if (epoch + 1) % 50 == 0 or epoch == cfg.epochs - 1:
            logger.info(f"TransE epoch {epoch + 1}/{cfg.epochs}: loss={epoch_loss:.4f}")

    return model


def export_relation_matrices(
    model: KgeModel, part: RelationPartition
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Relation embedding matrices in partition order.

    Returns:
        (R_shared, R_spec) with shapes (|shared|, d) and (|specific|, d)
    """
    missing = [r for r in (*part.shared, *part.specific) if r not in model.relation_index]
    if missing:
        raise KeyError(f"Relations missing from KGE model: {', '.join(missing)}")

    weight = model.relation_emb.weight.detach()

    def rows(ids: Sequence[str]) -> torch.Tensor:
        if not ids:
            return weight.new_zeros((0, model.dim))
        index = torch.tensor([model.relation_index[r] for r in ids], dtype=torch.long)
        return weight[index].clone()

    return rows(part.shared), rows(part.specific)
