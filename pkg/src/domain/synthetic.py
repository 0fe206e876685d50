"""
Domain Layer - Synthetic Corpus

Two-domain interaction data with a planted, relation-mediated signal:
every user follows one (relation, value) taste, and with probability
``pattern_strength`` the next item shares that attribute value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .entities import Triple


class SyntheticSpec(BaseModel):
    """Shape of a generated desk-scale corpus."""

    domains: tuple[str, str] = Field(("source", "target"), description="Domain names")
    n_users: int = Field(200, ge=1, description="Users per domain")
    n_items: int = Field(50, ge=1, description="Items per domain")
    n_shared_relations: int = Field(3, ge=1, description="Relations present in both KGs")
    n_specific_relations: int = Field(2, ge=0, description="Relations per domain KG only")
    values_per_relation: int = Field(5, ge=1, description="Attribute values per relation")
    min_seq_len: int = Field(5, ge=3, description="Shortest sequence")
    max_seq_len: int = Field(15, ge=3, description="Longest sequence")
    pattern_strength: float = Field(0.8, ge=0.0, le=1.0, description="Taste adherence")
    seed: int = Field(0)

    @model_validator(mode="after")
    def _check(self) -> SyntheticSpec:
        if self.domains[0] == self.domains[1]:
            raise ValueError("Domain names must differ")
        if self.min_seq_len > self.max_seq_len:
            raise ValueError("min_seq_len must not exceed max_seq_len")
        return self


@dataclass
class SyntheticDomain:
    """Generated files of one domain, in memory."""

    name: str
    interactions: list[tuple[str, str, int]] = field(default_factory=list)
    triples: list[Triple] = field(default_factory=list)
    links: dict[str, str] = field(default_factory=dict)


def shared_relation_ids(spec: SyntheticSpec) -> list[str]:
    return [f"shared_r{k}" for k in range(spec.n_shared_relations)]


def specific_relation_ids(spec: SyntheticSpec, domain: str) -> list[str]:
    return [f"{domain}_r{k}" for k in range(spec.n_specific_relations)]


def _generate_domain(
    spec: SyntheticSpec, domain: str, rng: np.random.Generator
) -> SyntheticDomain:
    out = SyntheticDomain(name=domain)
    relations = shared_relation_ids(spec) + specific_relation_ids(spec, domain)
    items = [f"i{n:03d}" for n in range(spec.n_items)]

    # attribute[r][n] = value index of item n under relation r
    attribute = rng.integers(spec.values_per_relation, size=(len(relations), spec.n_items))
    for n, item in enumerate(items):
        entity = f"{domain}_item_{n:03d}"
        out.links[item] = entity
        for r, relation in enumerate(relations):
            value = f"val_{relation}_{int(attribute[r, n])}"
            out.triples.append(Triple(entity, relation, value))

    for u in range(spec.n_users):
        user = f"u{u:04d}"
        taste_relation = int(rng.integers(len(relations)))
        taste_value = int(rng.integers(spec.values_per_relation))
        liked = np.flatnonzero(attribute[taste_relation] == taste_value)
        length = int(rng.integers(spec.min_seq_len, spec.max_seq_len + 1))

        sequence = [int(rng.integers(spec.n_items))]
        for _ in range(length - 1):
            if len(liked) and rng.random() < spec.pattern_strength:
                sequence.append(int(rng.choice(liked)))
            else:
                sequence.append(int(rng.integers(spec.n_items)))
        for t, n in enumerate(sequence):
            out.interactions.append((user, items[n], t))
    return out


def generate_synthetic_corpus(spec: SyntheticSpec) -> dict[str, SyntheticDomain]:
    """
    Generate both domains from one seeded stream.

    Shared relations use the same attribute-value entities in both
    domains; specific relations are namespaced by domain.
    """
    rng = np.random.default_rng(spec.seed)
    return {domain: _generate_domain(spec, domain, rng) for domain in spec.domains}
