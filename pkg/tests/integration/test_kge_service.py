"""
Integration Tests for the KGE Service

TransE training into a model directory and the rules for reusing it.
"""

from __future__ import annotations

import json

import pytest

from src.application import kge_service as kge_module
from src.application.kge_service import KgeService
from src.domain.corpus import kg_fingerprint, partition_relations, perturb_kg_sparsity
from src.domain.kge import KgeConfig


@pytest.fixture
def counted_training(monkeypatch) -> list[int]:
    """Count calls into train_kge while still training."""
    calls: list[int] = []
    original = kge_module.train_kge

    def counting(kg, cfg):
        calls.append(cfg.dim)
        return original(kg, cfg)

    monkeypatch.setattr(kge_module, "train_kge", counting)
    return calls


class TestKgeReuse:
    """Tests for reloading a stored TransE model."""

    def test_same_request_reuses(self, two_domain_kg, temp_dir, counted_training):
        partition = partition_relations(two_domain_kg)
        cfg = KgeConfig(dim=4, epochs=2, seed=1)
        service = KgeService()
        first = service.train(two_domain_kg, partition, cfg, temp_dir / "kge")
        second = service.train(two_domain_kg, partition, cfg, temp_dir / "kge")
        assert counted_training == [4]
        assert second.loss_history == first.loss_history

    def test_changed_config_retrains(self, two_domain_kg, temp_dir, counted_training):
        partition = partition_relations(two_domain_kg)
        service = KgeService()
        service.train(two_domain_kg, partition, KgeConfig(dim=4, epochs=1), temp_dir / "kge")
        model = service.train(
            two_domain_kg, partition, KgeConfig(dim=16, epochs=3), temp_dir / "kge"
        )
        assert model.dim == 16
        assert len(model.loss_history) == 3
        assert counted_training == [4, 16]
        assert service.store.load(temp_dir / "kge").dim == 16

    def test_changed_kg_retrains(self, two_domain_kg, temp_dir, counted_training):
        """Test that a perturbed KG does not pick up the model of the full KG."""
        cfg = KgeConfig(dim=4, epochs=1)
        service = KgeService()
        service.train(two_domain_kg, partition_relations(two_domain_kg), cfg, temp_dir / "kge")
        sparse = perturb_kg_sparsity(two_domain_kg, 0.4, seed=0)
        service.train(sparse, partition_relations(sparse), cfg, temp_dir / "kge")
        assert len(counted_training) == 2

        manifest = json.loads((temp_dir / "kge" / "manifest.json").read_text())
        assert manifest["kg_fingerprint"] == kg_fingerprint(sparse)

    def test_manifest_without_fingerprint_retrains(
        self, two_domain_kg, temp_dir, counted_training
    ):
        partition = partition_relations(two_domain_kg)
        cfg = KgeConfig(dim=4, epochs=1)
        service = KgeService()
        service.train(two_domain_kg, partition, cfg, temp_dir / "kge")
        path = temp_dir / "kge" / "manifest.json"
        manifest = json.loads(path.read_text())
        del manifest["kg_fingerprint"]
        path.write_text(json.dumps(manifest))
        service.train(two_domain_kg, partition, cfg, temp_dir / "kge")
        assert len(counted_training) == 2

    def test_statistics_written(self, two_domain_kg, temp_dir):
        partition = partition_relations(two_domain_kg)
        KgeService().train(two_domain_kg, partition, KgeConfig(dim=4, epochs=1), temp_dir / "kge")
        assert (temp_dir / "kge" / "entity_frequency.csv").exists()
        assert (temp_dir / "kge" / "relation_statistics.csv").exists()
