"""
Domain Layer - Corpus Services

Relation partitioning, leave-one-out splitting, identity shuffling,
KG sparsity perturbation and frequency statistics. All functions are pure
and deterministic for a fixed seed.
"""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence

import numpy as np

from .entities import (
    DatasetSplit,
    KnowledgeGraph,
    RelationPartition,
    UserSequence,
)
from .exceptions import EmptyCorpusError, SequenceTooShortError

logger = logging.getLogger(__name__)

MIN_SEQUENCE_LENGTH = 3


# ============================================================================
# Relations
# ============================================================================


def partition_relations(kg: KnowledgeGraph) -> RelationPartition:
    """
    Split relations into domain-shared and domain-specific sets.

    A relation is shared when it occurs in the KG files of at least two
    domains; every other relation is specific.
    """
    shared = sorted(r for r, tags in kg.domain_tags.items() if len(tags) >= 2)
    specific = sorted(r for r, tags in kg.domain_tags.items() if len(tags) < 2)
    by_domain = {
        domain: tuple(r for r in specific if domain in kg.domain_tags[r])
        for domain in kg.domains
    }
    if not shared:
        logger.warning("No relation occurs in more than one domain; shared set is empty")
    return RelationPartition(
        shared=tuple(shared), specific=tuple(specific), specific_by_domain=by_domain
    )


def relation_statistics(
    kg: KnowledgeGraph, partition: RelationPartition
) -> list[dict[str, int | str]]:
    """Per-domain counts of shared and specific relations."""
    rows: list[dict[str, int | str]] = []
    shared = set(partition.shared)
    for domain in kg.domains:
        relations = kg.relations_of(domain)
        rows.append(
            {
                "domain": domain,
                "relations": len(relations),
                "shared": len(relations & shared),
                "specific": len(partition.specific_by_domain.get(domain, ())),
            }
        )
    return rows


# ============================================================================
# Sequences and Splits
# ============================================================================


def restrict_to_linked_items(
    sequences: Iterable[UserSequence],
    links: Mapping[str, str],
    min_len: int = MIN_SEQUENCE_LENGTH,
) -> list[UserSequence]:
    """Keep only KG-linked items, dropping users that fall below ``min_len``."""
    kept: list[UserSequence] = []
    for seq in sequences:
        items = tuple(i for i in seq.items if i in links)
        if len(items) >= min_len:
            kept.append(UserSequence(user=seq.user, items=items, domain=seq.domain))
    if not kept:
        raise EmptyCorpusError("No sequences left after restricting to linked items")
    return kept


def leave_one_out_split(
    sequences: Sequence[UserSequence],
    item_entity_links: Mapping[str, str] | None = None,
) -> DatasetSplit:
    """
    Hold out each user's last item for test and second-to-last for validation.

    Args:
        sequences: Chronological sequences of one domain
        item_entity_links: Optional partial item → entity map

    Returns:
        DatasetSplit whose train portions exclude the last two items
    """
    if not sequences:
        raise EmptyCorpusError("Cannot split an empty sequence list")

    short = [s.user for s in sequences if len(s.items) < MIN_SEQUENCE_LENGTH]
    if short:
        raise SequenceTooShortError(short)

    domains = {s.domain for s in sequences}
    if len(domains) != 1:
        raise ValueError(f"Sequences span several domains: {sorted(domains)}")

    train: list[UserSequence] = []
    valid: dict[str, str] = {}
    test: dict[str, str] = {}
    vocab: set[str] = set()
    for seq in sequences:
        if seq.user in valid:
            raise ValueError(f"Duplicate user in split: {seq.user}")
        train.append(UserSequence(user=seq.user, items=seq.items[:-2], domain=seq.domain))
        valid[seq.user] = seq.items[-2]
        test[seq.user] = seq.items[-1]
        vocab.update(seq.items)

    links = dict(item_entity_links or {})
    unlinked = len(vocab - links.keys())
    if links and unlinked:
        logger.info(f"{unlinked}/{len(vocab)} items have no entity link")

    return DatasetSplit(
        domain=domains.pop(),
        train_sequences=tuple(train),
        valid_targets=valid,
        test_targets=test,
        item_vocab=tuple(sorted(vocab)),
        item_entity_links={i: e for i, e in links.items() if i in vocab},
    )


def shuffle_user_identities(
    splits: Mapping[str, DatasetSplit], seed: int
) -> dict[str, DatasetSplit]:
    """
    Replace user ids with fresh opaque ids, disjoint across domains.

    Item sequences and targets are untouched; only identities change.
    """
    if len(splits) < 2:
        raise ValueError("Identity shuffling needs at least two domains")

    pairs = [
        (domain, seq.user)
        for domain in sorted(splits)
        for seq in splits[domain].train_sequences
    ]
    rng = np.random.default_rng(seed)
    numbers = rng.permutation(len(pairs))
    width = len(str(max(len(pairs) - 1, 0)))
    fresh = {pair: f"u{int(n):0{width}d}" for pair, n in zip(pairs, numbers)}

    shuffled: dict[str, DatasetSplit] = {}
    for domain in sorted(splits):
        split = splits[domain]
        mapping = {seq.user: fresh[(domain, seq.user)] for seq in split.train_sequences}
        shuffled[domain] = DatasetSplit(
            domain=split.domain,
            train_sequences=tuple(
                UserSequence(user=mapping[s.user], items=s.items, domain=s.domain)
                for s in split.train_sequences
            ),
            valid_targets={mapping[u]: i for u, i in split.valid_targets.items()},
            test_targets={mapping[u]: i for u, i in split.test_targets.items()},
            item_vocab=split.item_vocab,
            item_entity_links=split.item_entity_links,
        )
    return shuffled


# ============================================================================
# Knowledge Graph Perturbation and Statistics
# ============================================================================


def removal_count(n_triples: int, remove_ratio: float) -> int:
    """Number of triples removed: |T|·ratio rounded half-up."""
    return int(math.floor(n_triples * remove_ratio + 0.5))


def perturb_kg_sparsity(
    kg: KnowledgeGraph, remove_ratio: float, seed: int
) -> KnowledgeGraph:
    """
    Remove a uniformly random fraction of triples.

    Entity, relation and domain-tag sets are recomputed from the survivors.
    """
    if not 0.0 <= remove_ratio < 1.0:
        raise ValueError(f"remove_ratio must be in [0, 1), got {remove_ratio}")
    n_remove = removal_count(len(kg), remove_ratio)
    if n_remove == 0:
        return kg

    rng = np.random.default_rng(seed)
    removed = set(rng.choice(len(kg), size=n_remove, replace=False).tolist())
    keep = [i for i in range(len(kg)) if i not in removed]
    logger.info(f"Sparsity {remove_ratio:.2f}: removed {n_remove}/{len(kg)} triples")
    return KnowledgeGraph(
        triples=tuple(kg.triples[i] for i in keep),
        triple_domains=tuple(kg.triple_domains[i] for i in keep),
    )


def kg_fingerprint(kg: KnowledgeGraph) -> str:
    """sha256 over the sorted triples; independent of file order."""
    digest = hashlib.sha256()
    for triple in sorted(kg.triples, key=lambda t: (t.head, t.relation, t.tail)):
        digest.update(f"{triple.head}\t{triple.relation}\t{triple.tail}\n".encode())
    return digest.hexdigest()


def entity_frequencies(kg: KnowledgeGraph) -> Counter[str]:
    """Number of triples in which each entity appears as head or tail."""
    counts: Counter[str] = Counter()
    for triple in kg.triples:
        counts[triple.head] += 1
        counts[triple.tail] += 1
    return counts


def entity_frequency_stats(kg: KnowledgeGraph) -> dict[int, int]:
    """
    Histogram of entity frequencies.

    Returns:
        Map frequency → number of entities with that frequency, ascending.
        Values sum to |E|.
    """
    if not kg.triples:
        raise EmptyCorpusError("Entity statistics need a non-empty KG")
    histogram = Counter(entity_frequencies(kg).values())
    return dict(sorted(histogram.items()))


def corpus_statistics(
    splits: Mapping[str, DatasetSplit], kg: KnowledgeGraph | None = None
) -> list[dict[str, float | int | str]]:
    """Users, items, interactions and average length per domain."""
    rows: list[dict[str, float | int | str]] = []
    for domain in sorted(splits):
        split = splits[domain]
        n_users = len(split.train_sequences)
        row: dict[str, float | int | str] = {
            "domain": domain,
            "users": n_users,
            "items": len(split.item_vocab),
            "interactions": split.n_interactions,
            "avg_seq_len": split.n_interactions / n_users if n_users else 0.0,
            "linked_items": len(split.item_entity_links),
        }
        if kg is not None:
            row["relations"] = len(kg.relations_of(domain))
        rows.append(row)
    return rows
