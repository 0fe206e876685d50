"""
Domain Layer - Entities

Core data objects: knowledge-graph triples, user sequences, leave-one-out
splits and metric reports.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from pydantic import BaseModel, Field, model_validator

from .value_objects import EvalPhase

# ============================================================================
# Knowledge Graph
# ============================================================================


@dataclass(frozen=True, slots=True)
class Triple:
    """A (head, relation, tail) fact."""

    head: str
    relation: str
    tail: str

    def __post_init__(self) -> None:
        if not (self.head and self.relation and self.tail):
            raise ValueError(f"Triple fields must be non-empty: {self!r}")


@dataclass(frozen=True)
class KnowledgeGraph:
    """
    Merged knowledge graph over all domains.

    ``triple_domains[i]`` names the domains whose KG files contain
    ``triples[i]``; ``domain_tags`` is derived from it and maps each relation
    to the domains in which it occurs.
    """

    triples: tuple[Triple, ...]
    triple_domains: tuple[frozenset[str], ...]
    entities: frozenset[str] = field(init=False)
    relations: frozenset[str] = field(init=False)
    domain_tags: Mapping[str, frozenset[str]] = field(init=False)

    def __post_init__(self) -> None:
        if len(self.triples) != len(self.triple_domains):
            raise ValueError(
                f"triples ({len(self.triples)}) and triple_domains "
                f"({len(self.triple_domains)}) must be aligned"
            )
        if len(set(self.triples)) != len(self.triples):
            raise ValueError("Duplicate triples in KnowledgeGraph")

        entities: set[str] = set()
        tags: dict[str, set[str]] = {}
        for triple, domains in zip(self.triples, self.triple_domains):
            entities.add(triple.head)
            entities.add(triple.tail)
            tags.setdefault(triple.relation, set()).update(domains)

        object.__setattr__(self, "entities", frozenset(entities))
        object.__setattr__(self, "relations", frozenset(tags))
        object.__setattr__(
            self, "domain_tags", {r: frozenset(d) for r, d in tags.items()}
        )

    @classmethod
    def from_domain_triples(
        cls, per_domain: Mapping[str, Iterable[Triple]]
    ) -> KnowledgeGraph:
        """Merge per-domain triple lists, removing exact duplicates."""
        order: dict[Triple, set[str]] = {}
        for domain in sorted(per_domain):
            for triple in per_domain[domain]:
                order.setdefault(triple, set()).add(domain)
        return cls(
            triples=tuple(order),
            triple_domains=tuple(frozenset(d) for d in order.values()),
        )

    @property
    def domains(self) -> list[str]:
        """All domain names with at least one triple."""
        names: set[str] = set()
        for domains in self.triple_domains:
            names.update(domains)
        return sorted(names)

    def relations_of(self, domain: str) -> frozenset[str]:
        """Relation vocabulary of one domain."""
        return frozenset(r for r, tags in self.domain_tags.items() if domain in tags)

    def __len__(self) -> int:
        return len(self.triples)


@dataclass(frozen=True)
class RelationPartition:
    """Shared/specific split of the relation vocabulary (lexicographic order)."""

    shared: tuple[str, ...]
    specific: tuple[str, ...]
    specific_by_domain: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        overlap = set(self.shared) & set(self.specific)
        if overlap:
            raise ValueError(f"Relations both shared and specific: {sorted(overlap)}")

    @property
    def all_relations(self) -> tuple[str, ...]:
        return tuple(sorted((*self.shared, *self.specific)))


# ============================================================================
# Interaction Sequences
# ============================================================================


@dataclass(frozen=True)
class UserSequence:
    """Chronologically ordered interactions of one user in one domain."""

    user: str
    items: tuple[str, ...]
    domain: str

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class DatasetSplit:
    """
    Leave-one-out split of one domain.

    ``train_sequences`` hold each user's items without the last two;
    the second-to-last item is the validation target and the last the
    test target.
    """

    domain: str
    train_sequences: tuple[UserSequence, ...]
    valid_targets: Mapping[str, str]
    test_targets: Mapping[str, str]
    item_vocab: tuple[str, ...]
    item_entity_links: Mapping[str, str] = field(default_factory=dict)

    @property
    def users(self) -> list[str]:
        return [seq.user for seq in self.train_sequences]

    def context(self, user_index: int, phase: EvalPhase) -> tuple[str, tuple[str, ...], str]:
        """
        Context items and phase target for the user at ``user_index``.

        Returns:
            (user, context_items, target_item)
        """
        seq = self.train_sequences[user_index]
        if phase is EvalPhase.VALID:
            return seq.user, seq.items, self.valid_targets[seq.user]
        context = (*seq.items, self.valid_targets[seq.user])
        return seq.user, context, self.test_targets[seq.user]

    def full_sequence(self, user_index: int) -> tuple[str, ...]:
        """Reconstruct the original sequence: train ⧺ valid ⧺ test."""
        seq = self.train_sequences[user_index]
        return (*seq.items, self.valid_targets[seq.user], self.test_targets[seq.user])

    @property
    def n_interactions(self) -> int:
        return sum(len(s) + 2 for s in self.train_sequences)


# ============================================================================
# Evaluation Results
# ============================================================================


@dataclass(frozen=True, slots=True)
class RankingResult:
    """1-based rank of one user's ground-truth item among the candidates."""

    user: str
    target_rank: int

    def __post_init__(self) -> None:
        if self.target_rank < 1:
            raise ValueError(f"target_rank must be >= 1, got {self.target_rank}")


class KMetrics(BaseModel):
    """Recall and NDCG at one cutoff."""

    recall: float = Field(..., ge=0.0, le=1.0)
    ndcg: float = Field(..., ge=0.0, le=1.0)


class MetricReport(BaseModel):
    """Per-K Recall/NDCG of one run."""

    system: str = Field("kgbridge", description="System or variant label")
    seed: int = Field(0, description="Run seed")
    per_k: dict[int, KMetrics] = Field(default_factory=dict)
    n_users: int = Field(0, ge=0, description="Users ranked")
    n_skipped: int = Field(0, ge=0, description="Users skipped for empty context")

    @property
    def ks(self) -> list[int]:
        return sorted(self.per_k)

    def recall(self, k: int) -> float:
        return self.per_k[k].recall

    def ndcg(self, k: int) -> float:
        return self.per_k[k].ndcg

    def to_rows(self) -> list[dict[str, float | int | str]]:
        """Flatten to ``system,seed,K,recall,ndcg,n_users`` rows."""
        return [
            {
                "system": self.system,
                "seed": self.seed,
                "K": k,
                "recall": self.per_k[k].recall,
                "ndcg": self.per_k[k].ndcg,
                "n_users": self.n_users,
            }
            for k in self.ks
        ]


class MetricSummary(BaseModel):
    """Mean of one metric over runs, compared against a baseline."""

    metric: str
    k: int
    mean: float
    baseline_mean: float
    mean_difference: float
    n_runs: int
    p_value: float | None = None
    degenerate: bool = Field(
        False, description="Zero variance of paired differences"
    )


class AggregateSummary(BaseModel):
    """Means and paired-test p-values of one system against a baseline."""

    system: str
    baseline: str
    rows: list[MetricSummary] = Field(default_factory=list)

    def find(self, metric: str, k: int) -> MetricSummary | None:
        for row in self.rows:
            if row.metric == metric and row.k == k:
                return row
        return None

    @model_validator(mode="after")
    def _sorted_rows(self) -> AggregateSummary:
        self.rows.sort(key=lambda r: (r.metric, r.k))
        return self


def merge_reports(reports: Sequence[MetricReport]) -> list[dict[str, float | int | str]]:
    """Concatenate report rows in input order."""
    rows: list[dict[str, float | int | str]] = []
    for report in reports:
        rows.extend(report.to_rows())
    return rows
