"""
Unit Tests for Domain Layer - Sequence Model

Covers batching, embedding, prompt enrichment, the causal encoder and the
prediction head.
"""

from __future__ import annotations

import math

import pytest
import torch

from src.domain.exceptions import NumericError
from src.domain.prompt_bank import PromptBank
from src.domain.seqmodel import (
    PAD_INDEX,
    ItemVocabulary,
    KGBridgeModel,
    ModelConfig,
    SequenceBatch,
    build_model,
    build_sequence_batch,
    build_training_batch,
)
from src.domain.value_objects import PromptKind


class TestItemVocabulary:
    """Tests for the joint item index."""

    def test_domains_stay_distinct(self, small_vocab):
        """Test that equal raw ids in two domains get different indices."""
        assert small_vocab.index("movie", "i0") != small_vocab.index("book", "i0")

    def test_padding_reserved(self, small_vocab):
        indices = [small_vocab.index(d, i) for d, i in small_vocab.keys]
        assert min(indices) == 1
        assert sorted(indices) == list(range(1, len(small_vocab) + 1))

    def test_candidate_mask(self, small_vocab):
        mask = small_vocab.candidate_mask("book")
        assert mask.shape == (len(small_vocab),)
        assert int(mask.sum()) == len(small_vocab.domain_indices("book"))
        for index in small_vocab.domain_indices("book"):
            assert bool(mask[index - 1])
        assert bool(small_vocab.candidate_mask().all())


class TestBatches:
    """Tests for left-padded batches."""

    def test_truncate_and_pad(self):
        batch = build_sequence_batch([[1, 2, 3, 4], [5]], max_len=3)
        assert batch.item_ids.tolist() == [[2, 3, 4], [0, 0, 5]]
        assert batch.padding_mask.tolist() == [[True, True, True], [False, False, True]]

    def test_empty_row(self):
        with pytest.raises(ValueError, match="at least one real item"):
            build_sequence_batch([[1], []], max_len=3)

    def test_training_targets(self):
        """Test that every input position predicts the next item."""
        batch = build_training_batch([[1, 2, 3, 4], [5, 6]], max_len=6)
        assert batch.item_ids.tolist() == [[1, 2, 3], [0, 0, 5]]
        assert batch.position_targets.tolist() == [[2, 3, 4], [0, 0, 6]]
        assert batch.targets.tolist() == [4, 6]

    def test_training_needs_two_items(self):
        with pytest.raises(ValueError, match="two items"):
            build_training_batch([[1]], max_len=4)


class TestEmbedding:
    """Tests for item + position embedding."""

    def test_sum_of_tables(self, make_model):
        model = make_model().eval()
        batch = build_sequence_batch([[3, 7]], max_len=6)
        out = model.embed_sequence(batch)
        expected = model.item_emb.weight[[3, 7]] + model.pos_emb.weight[[0, 1]]
        torch.testing.assert_close(out[0], expected)

    def test_positions_start_at_first_real_item(self, make_model):
        """Test that a left-padded row uses the same positions as an unpadded one."""
        model = make_model().eval()
        padded = model.embed_sequence(build_sequence_batch([[3, 7], [1, 2, 3, 4]], max_len=6))
        alone = model.embed_sequence(build_sequence_batch([[3, 7]], max_len=6))
        torch.testing.assert_close(padded[0, -2:], alone[0])
        assert float(padded[0, :2].abs().sum()) == 0.0

    def test_eval_is_deterministic(self, make_model):
        model = make_model().eval()
        batch = build_sequence_batch([[1, 2, 3]], max_len=6)
        assert torch.equal(model.embed_sequence(batch), model.embed_sequence(batch))

    def test_index_out_of_range(self, make_model):
        model = make_model(n_items=4)
        with pytest.raises(IndexError):
            model.embed_sequence(build_sequence_batch([[1, 5]], max_len=6))

    def test_too_long(self, make_model):
        model = make_model()
        batch = build_sequence_batch([list(range(1, 9))], max_len=8)
        with pytest.raises(ValueError, match="max_seq_len"):
            model.embed_sequence(batch)


class TestEnrichment:
    """Tests for prompt-item attention fusion."""

    def test_weights_are_probabilities(self, make_model):
        """Test that 2L+1 weights per position sum to 1."""
        model = make_model(prompt_len=2).eval()
        batch = build_sequence_batch([[1, 2, 3], [4, 5, 6]], max_len=6)
        embedded = model.embed_sequence(batch)
        enriched, weights = model.enrich_items(embedded, batch.padding_mask, return_weights=True)
        assert weights.shape == (2, 3, 5)
        assert bool((weights >= 0).all())
        torch.testing.assert_close(weights.sum(dim=-1), torch.ones(2, 3), atol=1e-6, rtol=0)
        assert enriched.shape == embedded.shape

    def test_constant_scorer_averages(self, make_model):
        """Test that a constant f_att gives (sum of prompts + e_i) / 5 for L=2."""
        model = make_model(prompt_len=2).eval()
        with torch.no_grad():
            for param in model.attn_net.parameters():
                param.zero_()
        batch = build_sequence_batch([[2]], max_len=6)
        embedded = model.embed_sequence(batch)
        enriched = model.enrich_items(embedded, batch.padding_mask)
        prompts = model.shared_bank.values.sum(0) + model.spec_bank.values.sum(0)
        torch.testing.assert_close(enriched[0, 0], (prompts + embedded[0, 0]) / 5)

    def test_padding_stays_zero(self, make_model):
        model = make_model().eval()
        batch = build_sequence_batch([[1], [1, 2, 3]], max_len=6)
        enriched = model.enrich_items(model.embed_sequence(batch), batch.padding_mask)
        assert float(enriched[0, :2].abs().sum()) == 0.0

    def test_dimension_mismatch(self, make_model):
        model = make_model()
        with pytest.raises(ValueError, match="does not match"):
            model.enrich_items(torch.zeros(1, 2, 5), torch.ones(1, 2, dtype=torch.bool))


class TestEncoder:
    """Tests for the causal transformer."""

    def test_causality(self, make_model):
        """Test that changing position j leaves earlier positions unchanged."""
        model = make_model(n_items=12).eval()
        a = build_sequence_batch([[1, 2, 3, 4, 5]], max_len=6)
        b = build_sequence_batch([[1, 2, 9, 11, 5]], max_len=6)
        with torch.no_grad():
            out_a, out_b = model(a), model(b)
        assert torch.equal(out_a[0, :2], out_b[0, :2])
        assert not torch.allclose(out_a[0, 2:], out_b[0, 2:])

    def test_padding_invariance(self, make_model):
        """Test that left padding does not change the final scores in fp32."""
        model = make_model().eval()
        with torch.no_grad():
            alone = model.score_last(build_sequence_batch([[4, 8, 2]], max_len=6))
            padded = model.score_last(
                build_sequence_batch([[4, 8, 2], [1, 2, 3, 5, 6, 7]], max_len=6)
            )
        assert padded.dtype == torch.float32
        assert torch.equal(padded[0], alone[0])

    def test_padding_invariance_random_rows(self, make_model):
        """Test exact invariance for random rows mixed with a longer row."""
        model = make_model(n_items=12).eval()
        gen = torch.Generator().manual_seed(5)
        with torch.no_grad():
            for _ in range(20):
                length = int(torch.randint(1, 6, (1,), generator=gen))
                row = (torch.randint(1, 13, (length,), generator=gen)).tolist()
                alone = model.score_last(build_sequence_batch([row], max_len=6))
                mixed = model.score_last(
                    build_sequence_batch([[1, 2, 3, 4, 5, 6], row], max_len=6)
                )
                assert torch.equal(mixed[1], alone[0]), row

    def test_hidden_states_padding(self, make_model):
        """Test that real positions match the unpadded row and padding is zero."""
        model = make_model().eval()
        with torch.no_grad():
            alone = model.hidden_states(build_sequence_batch([[4, 8]], max_len=6))
            padded = model.hidden_states(build_sequence_batch([[4, 8], [1, 2, 3, 5]], max_len=6))
        assert torch.equal(padded[0, -2:], alone[0])
        assert float(padded[0, :2].abs().sum()) == 0.0

    def test_right_padding_rejected(self, make_model):
        model = make_model()
        ids = torch.tensor([[3, 0]])
        batch = SequenceBatch(item_ids=ids, padding_mask=ids != PAD_INDEX)
        with pytest.raises(ValueError, match="left-padded"):
            model.score_last(batch)

    def test_all_padding_row(self, make_model):
        model = make_model()
        with pytest.raises(ValueError, match="at least one real item"):
            model.encode_sequence(torch.zeros(1, 2, 8), torch.zeros(1, 2, dtype=torch.bool))


class TestPrediction:
    """Tests for the softmax head."""

    def test_rows_sum_to_one(self, make_model):
        model = make_model().eval()
        z = torch.randn(3, 8, generator=torch.Generator().manual_seed(0))
        probs = model.predict_distribution(z)
        torch.testing.assert_close(probs.sum(-1), torch.ones(3), atol=1e-6, rtol=0)

    def test_known_logits(self, make_model):
        """Test that logits (ln 3, 0) give (0.75, 0.25)."""
        model = make_model(n_items=2).eval()
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.copy_(torch.tensor([math.log(3), 0.0]))
        probs = model.predict_distribution(torch.zeros(1, 8))
        torch.testing.assert_close(probs[0], torch.tensor([0.75, 0.25]))

    def test_candidate_mask(self, make_model):
        model = make_model(n_items=4).eval()
        mask = torch.tensor([True, False, True, False])
        probs = model.predict_distribution(torch.randn(2, 8), mask)
        assert float(probs[:, ~mask].sum()) == 0.0
        torch.testing.assert_close(probs.sum(-1), torch.ones(2))

    def test_non_finite_logits(self, make_model):
        model = make_model()
        with pytest.raises(NumericError):
            model.predict_distribution(torch.full((1, 8), float("nan")))


class TestBuildModel:
    """Tests for model construction."""

    def test_seeded_initialization(self, make_model):
        a, b = make_model(seed=3), make_model(seed=3)
        for (name, pa), pb in zip(a.state_dict().items(), b.state_dict().values()):
            assert torch.equal(pa, pb), name

    def test_padding_row_zero(self, make_model):
        model = make_model()
        assert float(model.item_emb.weight[PAD_INDEX].abs().sum()) == 0.0

    def test_bank_dimension_checked(self, model_config):
        shared = PromptBank(PromptKind.SHARED, torch.zeros(2, 4))
        spec = PromptBank(PromptKind.SPECIFIC, torch.zeros(2, 4))
        with pytest.raises(ValueError, match="model expects d=8"):
            KGBridgeModel(model_config, 5, shared, spec)

    def test_bank_lengths_checked(self, model_config):
        shared = PromptBank(PromptKind.SHARED, torch.zeros(2, 8))
        spec = PromptBank(PromptKind.SPECIFIC, torch.zeros(3, 8))
        with pytest.raises(ValueError, match="lengths differ"):
            build_model(model_config, 5, shared, spec, seed=0)

    def test_heads_divide_dim(self):
        with pytest.raises(ValueError, match="divisible"):
            ModelConfig(dim=9, n_heads=2)

    def test_vocabulary_from_splits(self, small_splits):
        vocab = ItemVocabulary.from_splits(small_splits)
        assert len(vocab) == sum(len(s.item_vocab) for s in small_splits.values())
