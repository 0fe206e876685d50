"""
Application Layer - KGE Service

Trains TransE on the merged KG, persists the model with its long-tail and
relation statistics, and hands relation matrices to prompt initialization.
"""

from __future__ import annotations

import logging
from pathlib import Path

import pandas as pd
import torch

from src.domain.corpus import entity_frequency_stats, kg_fingerprint, relation_statistics
from src.domain.entities import KnowledgeGraph, RelationPartition
from src.domain.kge import KgeConfig, KgeModel, export_relation_matrices, train_kge
from src.domain.repositories import KgeModelRepository
from src.infrastructure.checkpoint_store import KgeModelStore
from src.infrastructure.report_writer import write_table

logger = logging.getLogger(__name__)


class KgeService:
    """Application service for relation-embedding pretraining."""

    def __init__(self, store: KgeModelRepository | None = None) -> None:
        self.store = store or KgeModelStore()

    def train(
        self,
        kg: KnowledgeGraph,
        partition: RelationPartition,
        cfg: KgeConfig,
        out_dir: Path | None = None,
    ) -> KgeModel:
        """
        Fit TransE, or reload a matching model from ``out_dir``.

        A stored model is reused only when its config and KG fingerprint
        match the request; otherwise it is retrained and overwritten.

        Args:
            kg: Merged knowledge graph
            partition: Shared/specific relation split
            cfg: TransE hyper-parameters
            out_dir: Optional model directory (written after training)

        Returns:
            Trained KgeModel
        """
        fingerprint = kg_fingerprint(kg)
        if out_dir is not None:
            stored = self.store.provenance(Path(out_dir))
            wanted = {"config": cfg.model_dump(), "kg_fingerprint": fingerprint}
            if stored == wanted:
                logger.info(f"Reusing TransE model at {out_dir}")
                return self.store.load(Path(out_dir))
            if stored is not None:
                logger.warning(
                    f"TransE model at {out_dir} was trained on a different config or KG; "
                    "retraining"
                )

        model = train_kge(kg, cfg)
        if out_dir is not None:
            self.store.save(model, Path(out_dir), cfg.seed, cfg.model_dump(), fingerprint)
            self.write_statistics(kg, partition, Path(out_dir))
        return model

    def write_statistics(
        self, kg: KnowledgeGraph, partition: RelationPartition, out_dir: Path
    ) -> None:
        """Write the entity-frequency histogram and per-domain relation counts."""
        histogram = entity_frequency_stats(kg)
        write_table(
            pd.DataFrame(
                {"frequency": list(histogram), "entities": list(histogram.values())}
            ),
            out_dir / "entity_frequency.csv",
        )
        write_table(
            pd.DataFrame(
                relation_statistics(kg, partition),
                columns=["domain", "relations", "shared", "specific"],
            ),
            out_dir / "relation_statistics.csv",
        )

    def relation_matrices(
        self, model: KgeModel, partition: RelationPartition
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return export_relation_matrices(model, partition)
