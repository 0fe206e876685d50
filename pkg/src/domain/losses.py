"""
Domain Layer - Training Objectives

Next-item cross-entropy, the prompt disentanglement term, their fine-tune
composition and a finite-difference gradient checker.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .exceptions import NumericError
from .prompt_bank import PromptBank
from .seqmodel import KGBridgeModel, SequenceBatch, masked_cross_entropy

logger = logging.getLogger(__name__)


def _values(bank: PromptBank | torch.Tensor) -> torch.Tensor:
    return bank.values if isinstance(bank, PromptBank) else bank


def disentanglement_loss(
    shared: PromptBank | torch.Tensor,
    spec: PromptBank | torch.Tensor,
    tau: float,
) -> torch.Tensor:
    """
    InfoNCE over index-aligned prompt pairs.

    Row i of the shared bank is pulled towards row i of the specific bank
    and pushed away from every other specific row, using cosine similarity
    scaled by 1/τ.

    Args:
        shared: L×d shared prompts (detach them to keep gradients on spec)
        spec: L×d specific prompts
        tau: Temperature, > 0

    Returns:
        Scalar mean over the L rows
    """
    p_shared, p_spec = _values(shared), _values(spec)
    if p_shared.shape != p_spec.shape:
        raise ValueError(
            f"Bank shapes differ: {tuple(p_shared.shape)} vs {tuple(p_spec.shape)}"
        )
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")

    norms_shared = torch.linalg.vector_norm(p_shared, dim=1)
    norms_spec = torch.linalg.vector_norm(p_spec, dim=1)
    if bool((norms_shared == 0).any()) or bool((norms_spec == 0).any()):
        raise NumericError("Zero-norm prompt row; cosine similarity undefined")

    cos = (p_shared / norms_shared.unsqueeze(1)) @ (p_spec / norms_spec.unsqueeze(1)).T
    labels = torch.arange(p_shared.shape[0])
    return F.cross_entropy(cos / tau, labels)


def recommendation_loss(
    model: KGBridgeModel,
    batch: SequenceBatch,
    candidate_mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean cross-entropy over every position with a real next item."""
    if batch.position_targets is None:
        raise ValueError("Training batch needs position_targets")
    return masked_cross_entropy(model(batch, candidate_mask), batch.position_targets)


@dataclass(frozen=True)
class LossParts:
    """Total objective and its two terms."""

    total: torch.Tensor
    rec: torch.Tensor
    disen: torch.Tensor | None


def finetune_loss(
    model: KGBridgeModel,
    batch: SequenceBatch,
    lam: float,
    tau: float,
    candidate_mask: torch.Tensor | None = None,
    use_disen: bool = True,
) -> LossParts:
    """
    L_rec + λ·L_disen.

    The shared bank enters the disentanglement term detached, so that term
    only moves the specific bank.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    rec = recommendation_loss(model, batch, candidate_mask)
    if not use_disen or lam == 0.0:
        return LossParts(total=rec, rec=rec, disen=None)
    disen = disentanglement_loss(model.shared_bank.values.detach(), model.spec_bank, tau)
    return LossParts(total=rec + lam * disen, rec=rec, disen=disen)


def shared_bank_drift(before: torch.Tensor, after: torch.Tensor) -> float:
    """L2 norm of the change in a prompt bank."""
    return float(torch.linalg.vector_norm(after.detach() - before.detach()))


# ============================================================================
# Gradient Verification
# ============================================================================


@dataclass(frozen=True)
class CoordinateCheck:
    """Analytic vs central-difference derivative at one coordinate."""

    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    relative_error: float


def finite_difference_check(
    loss_fn: Callable[[], torch.Tensor],
    parameters: Mapping[str, torch.Tensor],
    coords_per_parameter: int = 1,
    eps: float = 1e-5,
    seed: int = 0,
    kink_tol: float = 1e-3,
    max_attempts: int = 50,
    floor: float = 1e-6,
) -> list[CoordinateCheck]:
    """
    Compare autograd against central differences on sampled coordinates.

    ``loss_fn`` must be deterministic (eval mode) and the parameters float64.
    Coordinates whose one-sided differences disagree by more than
    ``kink_tol`` sit near a ReLU/hinge kink and are redrawn.

    Returns:
        One CoordinateCheck per accepted coordinate
    """
    for name, param in parameters.items():
        if param.dtype != torch.float64:
            raise ValueError(f"Parameter '{name}' must be float64, got {param.dtype}")

    for param in parameters.values():
        param.grad = None
    loss_fn().backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in parameters.items()
    }

    generator = torch.Generator().manual_seed(seed)
    checks: list[CoordinateCheck] = []
    with torch.no_grad():
        base = float(loss_fn())
        for name, param in parameters.items():
            accepted = 0
            for _ in range(max_attempts):
                if accepted == coords_per_parameter:
                    break
                flat = int(torch.randint(param.numel(), (1,), generator=generator))
                index = tuple(int(i) for i in torch.unravel_index(torch.tensor(flat), param.shape))
                original = float(param[index])

                param[index] = original + eps
                plus = float(loss_fn())
                param[index] = original - eps
                minus = float(loss_fn())
                param[index] = original

                forward, backward = (plus - base) / eps, (base - minus) / eps
                if abs(forward - backward) > kink_tol * max(1.0, abs(forward), abs(backward)):
                    continue

                numeric = (plus - minus) / (2 * eps)
                analytic = float(grads[name][index])
                rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
                checks.append(CoordinateCheck(name, index, analytic, numeric, rel))
                accepted += 1
            if accepted < coords_per_parameter:
                logger.warning(f"Only {accepted} smooth coordinates found for '{name}'")
    return checks
