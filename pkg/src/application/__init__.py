# Application Layer - Use Cases / Services
"""
Application Layer

Use cases and application services.
Orchestrates domain objects to prepare corpora, train and evaluate models,
and run experiments.
"""

from .corpus_service import CorpusService, PreparedCorpus
from .evaluation_service import evaluate_model, pooled_validation_ndcg, rank_split
from .experiment_service import ExperimentConfig, ExperimentService, RunOptions
from .kge_service import KgeService
from .synthetic_service import SyntheticService
from .training_service import TrainConfig, TrainingService, apply_ablation

__all__ = [
    "CorpusService",
    "ExperimentConfig",
    "ExperimentService",
    "KgeService",
    "PreparedCorpus",
    "RunOptions",
    "SyntheticService",
    "TrainConfig",
    "TrainingService",
    "apply_ablation",
    "evaluate_model",
    "pooled_validation_ndcg",
    "rank_split",
]
