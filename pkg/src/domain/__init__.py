# Domain Layer - Core Models and Algorithms

from .corpus import (
    entity_frequency_stats,
    leave_one_out_split,
    partition_relations,
    perturb_kg_sparsity,
    shuffle_user_identities,
)
from .entities import (
    AggregateSummary,
    DatasetSplit,
    KMetrics,
    KnowledgeGraph,
    MetricReport,
    MetricSummary,
    RankingResult,
    RelationPartition,
    Triple,
    UserSequence,
)
from .kge import KgeConfig, KgeModel, export_relation_matrices, score_triple, train_kge, transe_loss
from .prompt_bank import PromptBank, PromptGeneratorConfig, generate_prompt_bank
from .run import RunRecord, RunStage, RunStatus
from .seqmodel import ItemVocabulary, KGBridgeModel, ModelConfig, SequenceBatch
from .value_objects import (
    AblationFlag,
    EvalPhase,
    GeneratorStrategy,
    PromptKind,
    RunId,
    TrainingStage,
)

__all__ = [
    # Corpus
    "entity_frequency_stats",
    "leave_one_out_split",
    "partition_relations",
    "perturb_kg_sparsity",
    "shuffle_user_identities",
    # Entities
    "AggregateSummary",
    "DatasetSplit",
    "KMetrics",
    "KnowledgeGraph",
    "MetricReport",
    "MetricSummary",
    "RankingResult",
    "RelationPartition",
    "Triple",
    "UserSequence",
    # KGE
    "KgeConfig",
    "KgeModel",
    "export_relation_matrices",
    "score_triple",
    "train_kge",
    "transe_loss",
    # Prompts and model
    "PromptBank",
    "PromptGeneratorConfig",
    "generate_prompt_bank",
    "ItemVocabulary",
    "KGBridgeModel",
    "ModelConfig",
    "SequenceBatch",
    # Runs
    "RunRecord",
    "RunStage",
    "RunStatus",
    # Value Objects
    "AblationFlag",
    "EvalPhase",
    "GeneratorStrategy",
    "PromptKind",
    "RunId",
    "TrainingStage",
]
