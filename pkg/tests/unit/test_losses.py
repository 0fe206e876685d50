"""
Unit Tests for Domain Layer - Training Objectives
"""

from __future__ import annotations

import math

import pytest
import torch

from src.domain.exceptions import NumericError
from src.domain.losses import (
    disentanglement_loss,
    finetune_loss,
    finite_difference_check,
    recommendation_loss,
    shared_bank_drift,
)
from src.domain.seqmodel import (
    build_sequence_batch,
    build_training_batch,
    masked_cross_entropy,
)


def _f64(rows) -> torch.Tensor:
    return torch.tensor(rows, dtype=torch.float64)


class TestDisentanglementLoss:
    """Tests for the InfoNCE prompt regularizer."""

    def test_uniform_similarity_is_log_l(self):
        """Test that equal cosines everywhere give ln L."""
        bank = _f64([[1.0, 0.0], [2.0, 0.0]])
        assert float(disentanglement_loss(bank, bank, tau=0.2)) == pytest.approx(math.log(2), abs=1e-12)

    def test_separated_pairs(self):
        """Test diagonal cos=1, off-diagonal cos=-1 at tau 0.2."""
        bank = _f64([[1.0, 0.0], [-1.0, 0.0]])
        expected = math.log1p(math.exp(-10.0))
        assert float(disentanglement_loss(bank, bank, tau=0.2)) == pytest.approx(expected, abs=1e-9)

    def test_scale_invariance(self):
        """Test that rescaling a row by c > 0 leaves the loss unchanged."""
        gen = torch.Generator().manual_seed(0)
        shared = torch.randn(3, 5, generator=gen, dtype=torch.float64)
        spec = torch.randn(3, 5, generator=gen, dtype=torch.float64)
        scaled = spec.clone()
        scaled[1] *= 7.5
        a = float(disentanglement_loss(shared, spec, tau=0.2))
        b = float(disentanglement_loss(shared, scaled, tau=0.2))
        assert a > 0.0
        assert a == pytest.approx(b, abs=1e-12)

    def test_zero_norm_row(self):
        with pytest.raises(NumericError, match="Zero-norm"):
            disentanglement_loss(_f64([[0.0, 0.0], [1.0, 0.0]]), _f64([[1.0, 0.0], [0.0, 1.0]]), 0.2)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shapes differ"):
            disentanglement_loss(torch.ones(2, 3), torch.ones(3, 3), 0.2)

    def test_non_positive_tau(self):
        with pytest.raises(ValueError, match="tau"):
            disentanglement_loss(torch.ones(2, 3), torch.ones(2, 3), 0.0)


class TestRecommendationLoss:
    """Tests for next-item cross-entropy."""

    def test_uniform_two_items(self):
        """Test that p(target) = 0.5 costs ln 2."""
        loss = masked_cross_entropy(torch.zeros(1, 1, 2), torch.tensor([[1]]))
        assert float(loss) == pytest.approx(math.log(2), abs=1e-6)

    def test_padding_positions_ignored(self):
        """Test that only positions with a real target contribute."""
        logits = torch.randn(1, 3, 4, generator=torch.Generator().manual_seed(0))
        targets = torch.tensor([[0, 2, 4]])
        expected = torch.nn.functional.cross_entropy(logits[0, 1:], torch.tensor([1, 3]))
        torch.testing.assert_close(masked_cross_entropy(logits, targets), expected)

    def test_no_targets(self):
        with pytest.raises(ValueError, match="no real targets"):
            masked_cross_entropy(torch.zeros(1, 2, 3), torch.zeros(1, 2, dtype=torch.long))

    def test_needs_position_targets(self, make_model):
        model = make_model()
        with pytest.raises(ValueError, match="position_targets"):
            recommendation_loss(model, build_sequence_batch([[1, 2]], 6))


class TestFinetuneLoss:
    """Tests for the fine-tuning objective."""

    @pytest.fixture
    def setup(self, make_model):
        model = make_model().double().eval()
        batch = build_training_batch([[1, 2, 3, 4], [5, 6, 7]], model.cfg.max_seq_len)
        return model, batch

    def test_lambda_zero_is_rec(self, setup):
        """Test that lambda 0 returns exactly the recommendation loss."""
        model, batch = setup
        parts = finetune_loss(model, batch, lam=0.0, tau=0.2)
        assert parts.disen is None
        assert torch.equal(parts.total, recommendation_loss(model, batch))

    def test_no_disen_matches_lambda_zero(self, setup):
        model, batch = setup
        a = finetune_loss(model, batch, lam=0.003, tau=0.2, use_disen=False)
        b = finetune_loss(model, batch, lam=0.0, tau=0.2)
        assert torch.equal(a.total, b.total)

    def test_composition(self, setup):
        """Test total = rec + lambda * disen against independent terms."""
        model, batch = setup
        parts = finetune_loss(model, batch, lam=0.004, tau=0.2)
        rec = recommendation_loss(model, batch)
        disen = disentanglement_loss(model.shared_bank, model.spec_bank, 0.2)
        assert float(parts.total) == pytest.approx(float(rec + 0.004 * disen), abs=1e-9)

    def test_disen_gradient_reaches_spec_only(self, setup):
        model, batch = setup
        finetune_loss(model, batch, lam=0.5, tau=0.2).disen.backward()
        assert model.shared_bank.values.grad is None
        assert float(model.spec_bank.values.grad.abs().sum()) > 0.0

    def test_negative_lambda(self, setup):
        model, batch = setup
        with pytest.raises(ValueError, match="lambda"):
            finetune_loss(model, batch, lam=-0.1, tau=0.2)


class TestGradientCheck:
    """Tests for finite-difference verification of the full model."""

    def test_model_gradients(self, make_model):
        """Test ten parameters, including a prompt and an f_att weight."""
        model = make_model(n_items=8).double().eval()
        batch = build_training_batch([[1, 2, 3, 4, 5], [6, 7, 8], [2, 4]], model.cfg.max_seq_len)
        named = dict(model.named_parameters())
        names = [
            "shared_bank.values",
            "spec_bank.values",
            "attn_net.0.weight",
            "attn_net.2.weight",
            "item_emb.weight",
            "pos_emb.weight",
            "encoder.layers.0.self_attn.in_proj_weight",
            "encoder.layers.0.linear1.weight",
            "encoder.layers.0.norm1.weight",
            "head.weight",
        ]
        checks = finite_difference_check(
            lambda: finetune_loss(model, batch, lam=0.5, tau=0.2).total,
            {name: named[name] for name in names},
            seed=1,
        )
        assert len(checks) == 10
        worst = max(checks, key=lambda c: c.relative_error)
        assert worst.relative_error < 1e-4, worst

    def test_requires_float64(self, make_model):
        model = make_model()
        with pytest.raises(ValueError, match="float64"):
            finite_difference_check(lambda: model.head.weight.sum(), {"head": model.head.weight})


def test_shared_bank_drift():
    before = torch.zeros(2, 2)
    after = torch.tensor([[3.0, 0.0], [0.0, 4.0]])
    assert shared_bank_drift(before, after) == pytest.approx(5.0)
    assert shared_bank_drift(before, before) == 0.0
