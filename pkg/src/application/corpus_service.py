"""
Application Layer - Corpus Service

Loads interaction and KG files, partitions relations and builds the
per-domain leave-one-out splits used by training and evaluation.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

from src.domain.corpus import (
    MIN_SEQUENCE_LENGTH,
    leave_one_out_split,
    partition_relations,
    restrict_to_linked_items,
    shuffle_user_identities,
)
from src.domain.entities import DatasetSplit, KnowledgeGraph, RelationPartition
from src.domain.seqmodel import ItemVocabulary
from src.infrastructure.tsv_reader import load_interactions, load_item_links, load_triples

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedCorpus:
    """Splits of every domain plus the joint item vocabulary."""

    splits: dict[str, DatasetSplit]
    vocab: ItemVocabulary

    @property
    def domains(self) -> list[str]:
        return sorted(self.splits)


class CorpusService:
    """
    Application service for corpus preparation.

    Handles:
    - Interaction loading and leave-one-out splitting
    - KG loading, merging and relation partitioning
    - User identity shuffling across domains
    """

    def load_kg_and_partition(
        self, kg_paths: Mapping[str, Path | str]
    ) -> tuple[KnowledgeGraph, RelationPartition]:
        """
        Merge per-domain KG files and split their relations.

        Args:
            kg_paths: Domain name → ``head<TAB>relation<TAB>tail`` file

        Returns:
            (KnowledgeGraph with domain tags, RelationPartition)
        """
        if len(kg_paths) < 2:
            raise ValueError(f"Need KG files for at least two domains, got {sorted(kg_paths)}")
        per_domain = {domain: load_triples(path) for domain, path in kg_paths.items()}
        kg = KnowledgeGraph.from_domain_triples(per_domain)
        partition = partition_relations(kg)
        logger.info(
            f"KG: {len(kg)} triples, {len(kg.entities)} entities; "
            f"{len(partition.shared)} shared / {len(partition.specific)} specific relations"
        )
        return kg, partition

    def prepare(
        self,
        interaction_paths: Mapping[str, Path | str],
        link_paths: Mapping[str, Path | str] | None = None,
        min_len: int = MIN_SEQUENCE_LENGTH,
        min_rating: float | None = None,
        restrict_to_linked: bool = False,
        shuffle_seed: int | None = None,
    ) -> PreparedCorpus:
        """
        Load every domain, split it and (optionally) shuffle user identities.

        Args:
            interaction_paths: Domain name → interaction TSV
            link_paths: Domain name → item-entity TSV
            min_len: Minimum interactions per user
            min_rating: Optional rating threshold for raw rating files
            restrict_to_linked: Keep only items with an entity link
            shuffle_seed: Seed for identity shuffling; None keeps raw ids

        Returns:
            PreparedCorpus over all domains
        """
        link_paths = link_paths or {}
        splits: dict[str, DatasetSplit] = {}
        for domain in sorted(interaction_paths):
            sequences = load_interactions(
                interaction_paths[domain], min_len=min_len, domain=domain, min_rating=min_rating
            )
            links = load_item_links(link_paths[domain]) if domain in link_paths else {}
            if restrict_to_linked:
                sequences = restrict_to_linked_items(sequences, links, min_len)
            splits[domain] = leave_one_out_split(sequences, links)

        if shuffle_seed is not None and len(splits) >= 2:
            splits = shuffle_user_identities(splits, shuffle_seed)

        vocab = ItemVocabulary.from_splits(splits)
        logger.info(
            f"Corpus: {', '.join(f'{d}={len(s.train_sequences)} users' for d, s in splits.items())}; "
            f"|V|={len(vocab)}"
        )
        return PreparedCorpus(splits=splits, vocab=vocab)
