"""
Application Layer - Training Service

Two-stage training: joint multi-domain pretraining on next-item
cross-entropy, then target-domain fine-tuning with the shared prompt bank
frozen and the disentanglement regularizer added.

Each epoch draws its shuffling and dropout randomness from seeds derived
from (seed, stage, epoch), so a run resumed from ``last/`` continues
exactly as the uninterrupted run would have.
"""

from __future__ import annotations

import copy
import logging
import math
from collections.abc import Callable, Iterable, Mapping
from pathlib import Path

import torch
from pydantic import BaseModel, Field, field_serializer, model_validator

from src.domain.checkpoint import Checkpoint
from src.domain.entities import DatasetSplit
from src.domain.exceptions import EmptyCorpusError, TrainingDivergedError
from src.domain.losses import finetune_loss, recommendation_loss, shared_bank_drift
from src.domain.prompt_bank import PromptBank
from src.domain.repositories import CheckpointRepository
from src.domain.seqmodel import (
    ItemVocabulary,
    KGBridgeModel,
    SequenceBatch,
    build_training_batch,
)
from src.domain.value_objects import AblationFlag, PromptKind, TrainingStage, derive_seed
from src.infrastructure.checkpoint_store import CheckpointStore

from .evaluation_service import pooled_validation_ndcg

logger = logging.getLogger(__name__)

LAST_DIR = "last"
BEST_DIR = "best"
# Raising these lets a finished stage continue from last/.
RESUMABLE_FIELDS = frozenset({"max_epochs"})


class TrainConfig(BaseModel):
    """Hyper-parameters of one training stage."""

    stage: TrainingStage = Field(TrainingStage.PRETRAIN, description="pretrain or finetune")
    learning_rate: float = Field(1e-4, gt=0.0, description="Adam step size")
    batch_size: int = Field(128, ge=1, description="Sequences per step")
    max_epochs: int = Field(100, ge=0, description="Epoch budget")
    patience: int = Field(10, ge=1, description="Epochs without improvement before stopping")
    dropout: float | None = Field(
        None, ge=0.1, le=0.5, description="Stage dropout; None keeps the model's rate"
    )
    lam: float = Field(0.003, ge=0.0, description="Disentanglement weight lambda")
    tau: float = Field(0.2, gt=0.0, description="InfoNCE temperature")
    seed: int = Field(0, description="Shuffling and dropout seed")
    ablation_flags: frozenset[AblationFlag] = Field(default_factory=frozenset)
    monitor_k: int = Field(10, ge=1, description="Early stopping monitors NDCG@monitor_k")
    history_mask: bool = Field(True, description="Exclude context items when validating")

    @field_serializer("ablation_flags")
    def _sorted_flags(self, flags: frozenset[AblationFlag]) -> list[str]:
        return sorted(f.value for f in flags)

    @model_validator(mode="after")
    def _finite(self) -> TrainConfig:
        if not math.isfinite(self.lam) or not math.isfinite(self.tau):
            raise ValueError("lam and tau must be finite")
        return self

    def has(self, flag: AblationFlag) -> bool:
        return flag in self.ablation_flags


# ============================================================================
# Ablation
# ============================================================================


def apply_ablation(
    flags: frozenset[AblationFlag],
    shared: PromptBank,
    spec: PromptBank,
    seed: int = 0,
    model: KGBridgeModel | None = None,
) -> tuple[tuple[PromptBank, PromptBank], KGBridgeModel | None]:
    """
    Substitute Xavier-normal banks for the switched-off KG guidance.

    ``no_kg_init`` redraws both banks, ``no_shared`` / ``no_spec`` one of
    them; shapes are preserved. ``no_disen`` and ``no_freeze`` only matter
    while fine-tuning and leave the banks alone. When ``model`` is given its
    banks are overwritten in place.
    """
    new_shared, new_spec = shared, spec
    if AblationFlag.NO_KG_INIT in flags or AblationFlag.NO_SHARED in flags:
        new_shared = PromptBank.xavier_normal(
            PromptKind.SHARED,
            shared.prompt_len,
            shared.dim,
            torch.Generator().manual_seed(derive_seed(seed, "xavier", PromptKind.SHARED.value)),
        )
    if AblationFlag.NO_KG_INIT in flags or AblationFlag.NO_SPEC in flags:
        new_spec = PromptBank.xavier_normal(
            PromptKind.SPECIFIC,
            spec.prompt_len,
            spec.dim,
            torch.Generator().manual_seed(derive_seed(seed, "xavier", PromptKind.SPECIFIC.value)),
        )
    if flags:
        logger.info(f"Ablation flags: {sorted(f.value for f in flags)}")

    if model is not None:
        with torch.no_grad():
            model.shared_bank.values.copy_(new_shared.values)
            model.spec_bank.values.copy_(new_spec.values)
        return (model.shared_bank, model.spec_bank), model
    return (new_shared, new_spec), model


# ============================================================================
# Training
# ============================================================================


class TrainingService:
    """
    Application service for the two training stages.

    Handles:
    - Mixed-domain pretraining and target-domain fine-tuning
    - Freezing by gradient exclusion
    - Early stopping on validation NDCG
    - Checkpointing to ``last/`` and ``best/`` and resuming
    """

    def __init__(self, store: CheckpointRepository | None = None) -> None:
        self.store = store or CheckpointStore()

    # ------------------------------------------------------------------
    # Public stages
    # ------------------------------------------------------------------

    def pretrain(
        self,
        model: KGBridgeModel,
        vocab: ItemVocabulary,
        splits: Mapping[str, DatasetSplit],
        cfg: TrainConfig,
        out_dir: Path | None = None,
    ) -> Checkpoint:
        """
        Joint next-item training over every domain's sequences.

        The softmax spans the joint vocabulary; all parameters train.

        Returns:
            Checkpoint of the best validation epoch
        """
        if not splits:
            raise EmptyCorpusError("Pretraining needs at least one domain")
        for param in model.parameters():
            param.requires_grad_(True)
        rows = self._training_rows(vocab, splits.values())

        def loss_fn(m: KGBridgeModel, batch: SequenceBatch) -> torch.Tensor:
            return recommendation_loss(m, batch)

        def valid_fn(m: KGBridgeModel) -> float:
            return pooled_validation_ndcg(m, vocab, splits, cfg.monitor_k, cfg.history_mask)

        return self._fit(
            TrainingStage.PRETRAIN, model, vocab, rows, cfg, loss_fn, valid_fn, out_dir
        )

    def finetune(
        self,
        pretrained: Checkpoint,
        target_split: DatasetSplit,
        cfg: TrainConfig,
        out_dir: Path | None = None,
    ) -> Checkpoint:
        """
        Optimize L_rec + λ·L_disen on the target domain only.

        The pretrained checkpoint is not modified. The shared bank stays
        frozen unless ``no_freeze``; ``no_disen`` drops the λ term.
        """
        model = copy.deepcopy(pretrained.model)
        vocab = pretrained.vocab
        for param in model.parameters():
            param.requires_grad_(True)
        if not cfg.has(AblationFlag.NO_FREEZE):
            model.shared_bank.freeze()

        shared_before = pretrained.model.shared_bank.values.detach().clone()
        candidates = vocab.candidate_mask(target_split.domain)
        rows = self._training_rows(vocab, [target_split])
        use_disen = not cfg.has(AblationFlag.NO_DISEN)

        def loss_fn(m: KGBridgeModel, batch: SequenceBatch) -> torch.Tensor:
            return finetune_loss(m, batch, cfg.lam, cfg.tau, candidates, use_disen).total

        def valid_fn(m: KGBridgeModel) -> float:
            return pooled_validation_ndcg(
                m, vocab, {target_split.domain: target_split}, cfg.monitor_k, cfg.history_mask
            )

        def annotate(ckpt: Checkpoint) -> None:
            ckpt.notes["shared_bank_drift"] = shared_bank_drift(
                shared_before, ckpt.model.shared_bank.values
            )
            ckpt.notes["target_domain"] = target_split.domain

        best = self._fit(
            TrainingStage.FINETUNE, model, vocab, rows, cfg, loss_fn, valid_fn, out_dir, annotate
        )
        annotate(best)
        logger.info(f"Shared bank drift after fine-tuning: {best.notes['shared_bank_drift']:.6g}")
        return best

    # ------------------------------------------------------------------
    # Checkpoints
    # ------------------------------------------------------------------

    def save_checkpoint(self, ckpt: Checkpoint, path: Path) -> Path:
        return self.store.save(ckpt, path)

    def load_checkpoint(self, path: Path) -> Checkpoint:
        return self.store.load(path)

    # ------------------------------------------------------------------
    # Internals
    # ------------------------------------------------------------------

    @staticmethod
    def _training_rows(
        vocab: ItemVocabulary, splits: Iterable[DatasetSplit]
    ) -> list[list[int]]:
        rows = [
            vocab.encode(split.domain, seq.items)
            for split in splits
            for seq in split.train_sequences
            if len(seq.items) >= 2
        ]
        if not rows:
            raise EmptyCorpusError("No training sequence has two or more items")
        return rows

    def _resume_point(self, out_dir: Path | None, cfg: TrainConfig) -> Checkpoint | None:
        if out_dir is None or not self.store.exists(out_dir / LAST_DIR):
            return None
        last = self.store.load(out_dir / LAST_DIR)
        saved = {k: v for k, v in last.train_config.items() if k not in RESUMABLE_FIELDS}
        current = {
            k: v for k, v in cfg.model_dump(mode="json").items() if k not in RESUMABLE_FIELDS
        }
        if saved != current:
            logger.warning(f"Config changed since {out_dir / LAST_DIR} was written; restarting")
            return None
        return last

    def _fit(
        self,
        stage: TrainingStage,
        model: KGBridgeModel,
        vocab: ItemVocabulary,
        rows: list[list[int]],
        cfg: TrainConfig,
        loss_fn: Callable[[KGBridgeModel, SequenceBatch], torch.Tensor],
        valid_fn: Callable[[KGBridgeModel], float],
        out_dir: Path | None,
        annotate: Callable[[Checkpoint], None] | None = None,
    ) -> Checkpoint:
        model.set_dropout(cfg.dropout if cfg.dropout is not None else model.cfg.dropout)

        named = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
        optimizer = torch.optim.Adam([p for _, p in named], lr=cfg.learning_rate)
        ckpt = Checkpoint(
            stage=stage,
            model=model,
            vocab=vocab,
            trainable=[n for n, _ in named],
            train_config=cfg.model_dump(mode="json"),
        )
        best: Checkpoint | None = None

        resumed = self._resume_point(out_dir, cfg)
        if resumed is not None and out_dir is not None:
            model.load_state_dict(resumed.model.state_dict())
            if resumed.optimizer_state is not None:
                state = optimizer.state_dict()
                state["state"] = resumed.optimizer_state["state"]
                optimizer.load_state_dict(state)
            for name in (
                "epoch",
                "best_epoch",
                "best_valid_metric",
                "epochs_without_improvement",
                "loss_history",
                "valid_history",
                "notes",
            ):
                setattr(ckpt, name, getattr(resumed, name))
            if self.store.exists(out_dir / BEST_DIR):
                best = self.store.load(out_dir / BEST_DIR)
            logger.info(f"{stage.value}: resuming after epoch {ckpt.epoch} from {out_dir}")
            if ckpt.epochs_without_improvement >= cfg.patience:
                return self._finish(ckpt, best)

        logger.info(
            f"{stage.value}: {len(rows)} sequences, {len(named)} trainable tensors, "
            f"lr={cfg.learning_rate}, max_epochs={cfg.max_epochs}, patience={cfg.patience}"
        )
        while ckpt.epoch < cfg.max_epochs:
            epoch = ckpt.epoch
            model.train()
            torch.manual_seed(derive_seed(cfg.seed, stage.value, epoch, "dropout"))
            shuffle = torch.Generator().manual_seed(
                derive_seed(cfg.seed, stage.value, epoch, "shuffle")
            )
            order = torch.randperm(len(rows), generator=shuffle).tolist()

            total, steps = 0.0, 0
            for step, start in enumerate(range(0, len(order), cfg.batch_size), start=1):
                batch = build_training_batch(
                    [rows[i] for i in order[start : start + cfg.batch_size]],
                    model.cfg.max_seq_len,
                )
                loss = loss_fn(model, batch)
                value = float(loss.detach())
                if not math.isfinite(value):
                    raise TrainingDivergedError(stage.value, epoch + 1, step, value)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += value
                steps += 1

            model.eval()
            metric = valid_fn(model)
            ckpt.epoch = epoch + 1
            ckpt.loss_history.append(total / max(steps, 1))
            ckpt.valid_history.append(metric)
            ckpt.optimizer_state = optimizer.state_dict()
            ckpt.rng_state = torch.get_rng_state()

            improved = metric > ckpt.best_valid_metric
            if improved:
                ckpt.best_valid_metric = metric
                ckpt.best_epoch = ckpt.epoch
                ckpt.epochs_without_improvement = 0
            else:
                ckpt.epochs_without_improvement += 1
            logger.info(
                f"{stage.value} epoch {ckpt.epoch}: loss={ckpt.loss_history[-1]:.4f} "
                f"ndcg@{cfg.monitor_k}={metric:.4f}{' *' if improved else ''}"
            )

            stop = ckpt.epochs_without_improvement >= cfg.patience
            if annotate is not None:
                annotate(ckpt)
            if improved:
                best = self._snapshot(ckpt)
                if out_dir is not None:
                    self.store.save(best, out_dir / BEST_DIR)
            if out_dir is not None:
                self.store.save(ckpt, out_dir / LAST_DIR)
            if stop:
                logger.info(
                    f"{stage.value}: early stop at epoch {ckpt.epoch}, best epoch {ckpt.best_epoch}"
                )
                break

        return self._finish(ckpt, best)

    @staticmethod
    def _snapshot(ckpt: Checkpoint) -> Checkpoint:
        snap = copy.copy(ckpt)
        snap.model = copy.deepcopy(ckpt.model)
        snap.optimizer_state = copy.deepcopy(ckpt.optimizer_state)
        snap.loss_history = list(ckpt.loss_history)
        snap.valid_history = list(ckpt.valid_history)
        snap.notes = dict(ckpt.notes)
        snap.rng_state = ckpt.rng_state.clone()
        return snap

    @staticmethod
    def _finish(ckpt: Checkpoint, best: Checkpoint | None) -> Checkpoint:
        """Best-epoch checkpoint; the untouched model when no epoch ran."""
        result = best if best is not None else TrainingService._snapshot(ckpt)
        result.model.eval()
        return result
