"""
Application Layer - Evaluation Service

Full-ranking leave-one-out evaluation of a trained model on one domain.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence

import torch

from src.domain.entities import DatasetSplit, MetricReport, RankingResult
from src.domain.metrics import DEFAULT_KS, compute_metrics, rank_targets_batch
from src.domain.seqmodel import ItemVocabulary, KGBridgeModel, build_sequence_batch
from src.domain.value_objects import EvalPhase

logger = logging.getLogger(__name__)


def rank_split(
    model: KGBridgeModel,
    vocab: ItemVocabulary,
    split: DatasetSplit,
    phase: EvalPhase,
    history_mask: bool = True,
    batch_size: int = 256,
) -> tuple[list[RankingResult], int]:
    """
    Rank every user's phase target among the domain's items.

    The context is the train portion (valid phase) or train plus the
    validation item (test phase). With ``history_mask`` the context items
    other than the target are excluded from ranking.

    Returns:
        (ranking results, number of users skipped for an empty context)
    """
    phase = EvalPhase(phase)
    domain_mask = vocab.candidate_mask(split.domain)
    rows: list[tuple[str, list[int], int]] = []
    skipped = 0
    for i in range(len(split.train_sequences)):
        user, context, target = split.context(i, phase)
        if not context:
            skipped += 1
            continue
        rows.append((user, vocab.encode(split.domain, context), vocab.index(split.domain, target)))
    if skipped:
        logger.warning(f"{split.domain}/{phase.value}: skipped {skipped} users with empty context")

    was_training = model.training
    model.eval()
    results: list[RankingResult] = []
    with torch.no_grad():
        for start in range(0, len(rows), batch_size):
            chunk = rows[start : start + batch_size]
            batch = build_sequence_batch([r[1] for r in chunk], model.cfg.max_seq_len)
            scores = model.score_last(batch)
            targets = torch.tensor([r[2] - 1 for r in chunk], dtype=torch.long)

            excluded = (~domain_mask).unsqueeze(0).repeat(len(chunk), 1)
            if history_mask:
                for b, (_, context, target) in enumerate(chunk):
                    seen = [c - 1 for c in context if c != target]
                    if seen:
                        excluded[b, seen] = True

            ranks = rank_targets_batch(scores, targets, excluded)
            results.extend(
                RankingResult(user=r[0], target_rank=int(rank)) for r, rank in zip(chunk, ranks)
            )
    model.train(was_training)
    return results, skipped


def evaluate_model(
    model: KGBridgeModel,
    vocab: ItemVocabulary,
    split: DatasetSplit,
    phase: EvalPhase = EvalPhase.TEST,
    history_mask: bool = True,
    ks: Sequence[int] = DEFAULT_KS,
    system: str = "kgbridge",
    seed: int = 0,
) -> MetricReport:
    """Recall@K / NDCG@K of one domain's phase targets."""
    results, skipped = rank_split(model, vocab, split, phase, history_mask)
    return compute_metrics(results, ks, system=system, seed=seed, n_skipped=skipped)


def pooled_validation_ndcg(
    model: KGBridgeModel,
    vocab: ItemVocabulary,
    splits: Mapping[str, DatasetSplit],
    k: int = 10,
    history_mask: bool = True,
) -> float:
    """NDCG@k over the validation targets of all given domains together."""
    pooled: list[RankingResult] = []
    skipped = 0
    for domain in sorted(splits):
        results, n = rank_split(model, vocab, splits[domain], EvalPhase.VALID, history_mask)
        pooled.extend(results)
        skipped += n
    return compute_metrics(pooled, [k], n_skipped=skipped).ndcg(k)
