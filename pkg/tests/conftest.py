"""
Test Fixtures for KGBridge

Provides reusable fixtures for unit and integration tests.
"""

from __future__ import annotations

import tempfile
from collections.abc import Callable, Generator
from pathlib import Path

import pytest
import torch

from src.application.corpus_service import CorpusService, PreparedCorpus
from src.application.experiment_service import ExperimentConfig
from src.application.synthetic_service import SyntheticService
from src.application.training_service import TrainConfig
from src.domain.corpus import leave_one_out_split
from src.domain.entities import DatasetSplit, KnowledgeGraph, Triple, UserSequence
from src.domain.kge import KgeConfig
from src.domain.prompt_bank import PromptBank
from src.domain.seqmodel import ItemVocabulary, KGBridgeModel, ModelConfig, build_model
from src.domain.synthetic import SyntheticSpec
from src.domain.value_objects import PromptKind, TrainingStage


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def two_domain_kg() -> KnowledgeGraph:
    """Movie and book KGs sharing ``genre`` and ``author_of``."""
    return KnowledgeGraph.from_domain_triples(
        {
            "movie": [
                Triple("m1", "genre", "drama"),
                Triple("m2", "genre", "comedy"),
                Triple("m1", "directed_by", "p1"),
                Triple("p2", "author_of", "m2"),
            ],
            "book": [
                Triple("b1", "genre", "drama"),
                Triple("b2", "published_by", "press"),
                Triple("p2", "author_of", "b1"),
            ],
        }
    )


@pytest.fixture
def small_splits() -> dict[str, DatasetSplit]:
    """Two tiny domains with overlapping raw item ids."""

    def split(domain: str, offset: int) -> DatasetSplit:
        sequences = [
            UserSequence(
                user=f"{domain}_u{u}",
                items=tuple(f"i{(u + t + offset) % 6}" for t in range(5 + u % 3)),
                domain=domain,
            )
            for u in range(8)
        ]
        return leave_one_out_split(sequences)

    return {"movie": split("movie", 0), "book": split("book", 2)}


@pytest.fixture
def small_vocab(small_splits: dict[str, DatasetSplit]) -> ItemVocabulary:
    return ItemVocabulary.from_splits(small_splits)


@pytest.fixture
def model_config() -> ModelConfig:
    return ModelConfig(dim=8, max_seq_len=6, n_layers=1, n_heads=2, dropout=0.1)


@pytest.fixture
def make_model(
    model_config: ModelConfig,
) -> Callable[..., KGBridgeModel]:
    """Factory for small models with random banks."""

    def factory(n_items: int = 12, prompt_len: int = 2, seed: int = 0) -> KGBridgeModel:
        gen = torch.Generator().manual_seed(seed + 100)
        shared = PromptBank(PromptKind.SHARED, torch.randn(prompt_len, model_config.dim, generator=gen))
        spec = PromptBank(PromptKind.SPECIFIC, torch.randn(prompt_len, model_config.dim, generator=gen))
        return build_model(model_config, n_items, shared, spec, seed)

    return factory


@pytest.fixture
def synthetic_spec() -> SyntheticSpec:
    return SyntheticSpec(n_users=40, n_items=12, min_seq_len=5, max_seq_len=8, seed=3)


@pytest.fixture
def synthetic_config_path(synthetic_spec: SyntheticSpec, temp_dir: Path) -> Path:
    """Synthetic corpus written to disk; returns its config.json."""
    return SyntheticService().generate(synthetic_spec, temp_dir / "data")


@pytest.fixture
def synthetic_corpus(synthetic_config_path: Path) -> PreparedCorpus:
    cfg = ExperimentConfig.from_file(synthetic_config_path)
    return CorpusService().prepare(cfg.interactions, cfg.links, shuffle_seed=0)


@pytest.fixture
def fast_experiment(synthetic_config_path: Path, temp_dir: Path) -> ExperimentConfig:
    """Experiment config small enough to run the whole pipeline in seconds."""
    return ExperimentConfig.from_file(
        synthetic_config_path,
        output_dir=str(temp_dir / "runs"),
        seeds=[0],
        kge=KgeConfig(dim=8, epochs=5, batch_size=32),
        model=ModelConfig(dim=8, max_seq_len=6, n_layers=1, n_heads=2, dropout=0.1),
        pretrain=TrainConfig(
            stage=TrainingStage.PRETRAIN, max_epochs=2, batch_size=32, learning_rate=1e-3
        ),
        finetune=TrainConfig(
            stage=TrainingStage.FINETUNE, max_epochs=2, batch_size=32, learning_rate=1e-3
        ),
    )
