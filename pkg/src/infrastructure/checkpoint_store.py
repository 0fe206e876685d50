"""
Infrastructure Layer - Model Stores

Directory layout shared by TransE models and training checkpoints:

    <dir>/
    ├── manifest.json      # sorted keys, fixed indent: shapes, ids, config echo
    └── <tensor>.f32       # raw little-endian float32, row-major

Saving a loaded checkpoint reproduces the original files byte for byte.
"""

from __future__ import annotations

import base64
import json
import logging
import math
import shutil
from pathlib import Path
from typing import Any

import numpy as np
import torch

from src.domain.checkpoint import Checkpoint
from src.domain.exceptions import CheckpointLoadError
from src.domain.kge import KgeModel
from src.domain.prompt_bank import PromptBank
from src.domain.repositories import CheckpointRepository, KgeModelRepository
from src.domain.seqmodel import ItemVocabulary, KGBridgeModel, ModelConfig
from src.domain.value_objects import PromptKind, TrainingStage

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"


# ============================================================================
# Low-level helpers
# ============================================================================


def write_array(path: Path, tensor: torch.Tensor) -> None:
    array = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4")
    path.write_bytes(array.tobytes(order="C"))


def read_array(path: Path, shape: tuple[int, ...], field: str) -> torch.Tensor:
    if not path.exists():
        raise CheckpointLoadError(path.parent, field, f"array file {path.name} missing")
    data = np.fromfile(path, dtype="<f4")
    expected = math.prod(shape)
    if data.size != expected:
        raise CheckpointLoadError(
            path.parent, field, f"expected {expected} values for shape {list(shape)}, found {data.size}"
        )
    return torch.from_numpy(data.astype(np.float32).reshape(shape))


def write_manifest(directory: Path, manifest: dict[str, Any]) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=2, allow_nan=False) + "\n"
    (directory / MANIFEST).write_text(text, encoding="utf-8")


def read_manifest(directory: Path, required: list[str]) -> dict[str, Any]:
    path = directory / MANIFEST
    if not path.exists():
        raise CheckpointLoadError(directory, MANIFEST, "file missing")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointLoadError(directory, MANIFEST, f"invalid JSON: {e}") from e
    for key in required:
        if key not in manifest:
            raise CheckpointLoadError(directory, key, "missing from manifest")
    if manifest["format_version"] != FORMAT_VERSION:
        raise CheckpointLoadError(
            directory, "format_version", f"unsupported version {manifest['format_version']}"
        )
    return manifest


def _file_name(name: str) -> str:
    return f"{name}.f32"


def _replace_dir(tmp: Path, final: Path) -> None:
    if final.exists():
        shutil.rmtree(final)
    tmp.rename(final)


# ============================================================================
# TransE models
# ============================================================================


class KgeModelStore(KgeModelRepository):
    """TransE embeddings plus id orderings and loss history."""

    def save(
        self,
        model: KgeModel,
        path: Path,
        seed: int,
        config: dict | None = None,
        kg_fingerprint: str | None = None,
    ) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        write_array(path / "entity_emb.f32", model.entity_emb.weight)
        write_array(path / "relation_emb.f32", model.relation_emb.weight)
        write_manifest(
            path,
            {
                "format_version": FORMAT_VERSION,
                "kind": "transe",
                "dim": model.dim,
                "n_entities": len(model.entity_index),
                "n_relations": len(model.relation_index),
                "seed": seed,
                "config": config or {},
                "kg_fingerprint": kg_fingerprint,
                "entity_ids": model.entity_ids,
                "relation_ids": model.relation_ids,
                "loss_history": model.loss_history,
            },
        )
        logger.info(f"Saved TransE model to {path}")
        return path

    def load(self, path: Path) -> KgeModel:
        path = Path(path)
        manifest = read_manifest(
            path, ["format_version", "dim", "entity_ids", "relation_ids", "loss_history"]
        )
        dim = int(manifest["dim"])
        entity_ids, relation_ids = manifest["entity_ids"], manifest["relation_ids"]
        model = KgeModel(entity_ids, relation_ids, dim)
        with torch.no_grad():
            model.entity_emb.weight.copy_(
                read_array(path / "entity_emb.f32", (len(entity_ids), dim), "entity_emb")
            )
            model.relation_emb.weight.copy_(
                read_array(path / "relation_emb.f32", (len(relation_ids), dim), "relation_emb")
            )
        model.loss_history = [float(x) for x in manifest["loss_history"]]
        return model

    def provenance(self, path: Path) -> dict[str, Any] | None:
        path = Path(path)
        if not (path / MANIFEST).exists():
            return None
        manifest = read_manifest(path, ["format_version", "config"])
        return {
            "config": manifest["config"],
            "kg_fingerprint": manifest.get("kg_fingerprint"),
        }


# ============================================================================
# Training checkpoints
# ============================================================================

_CHECKPOINT_KEYS = [
    "format_version",
    "stage",
    "epoch",
    "best_epoch",
    "best_valid_metric",
    "epochs_without_improvement",
    "loss_history",
    "valid_history",
    "model_config",
    "n_items",
    "prompt_len",
    "vocab",
    "arrays",
    "trainable",
    "optimizer",
    "rng_state",
    "train_config",
    "notes",
]


class CheckpointStore(CheckpointRepository):
    """Checkpoint directories with model, banks and Adam moments."""

    def exists(self, path: Path) -> bool:
        return (Path(path) / MANIFEST).exists()

    def save(self, ckpt: Checkpoint, path: Path) -> Path:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)

        arrays: dict[str, list[int]] = {}
        for name, tensor in ckpt.model.state_dict().items():
            write_array(tmp / _file_name(name), tensor)
            arrays[name] = list(tensor.shape)

        optimizer: dict[str, Any] = {"steps": {}, "hyper": {}}
        if ckpt.optimizer_state is not None:
            group = ckpt.optimizer_state["param_groups"][0]
            optimizer["hyper"] = {
                "lr": group["lr"],
                "betas": list(group["betas"]),
                "eps": group["eps"],
                "weight_decay": group["weight_decay"],
            }
            for index, state in sorted(ckpt.optimizer_state["state"].items()):
                name = ckpt.trainable[index]
                optimizer["steps"][name] = int(state["step"])
                write_array(tmp / _file_name(f"adam.{name}.exp_avg"), state["exp_avg"])
                write_array(tmp / _file_name(f"adam.{name}.exp_avg_sq"), state["exp_avg_sq"])

        best = ckpt.best_valid_metric
        write_manifest(
            tmp,
            {
                "format_version": FORMAT_VERSION,
                "stage": ckpt.stage.value,
                "epoch": ckpt.epoch,
                "best_epoch": ckpt.best_epoch,
                "best_valid_metric": best if math.isfinite(best) else None,
                "epochs_without_improvement": ckpt.epochs_without_improvement,
                "loss_history": ckpt.loss_history,
                "valid_history": ckpt.valid_history,
                "model_config": ckpt.model.cfg.model_dump(),
                "n_items": ckpt.model.n_items,
                "prompt_len": ckpt.model.shared_bank.prompt_len,
                "vocab": [list(key) for key in ckpt.vocab.keys],
                "arrays": arrays,
                "trainable": ckpt.trainable,
                "optimizer": optimizer,
                "rng_state": base64.b64encode(ckpt.rng_state.numpy().tobytes()).decode("ascii"),
                "train_config": ckpt.train_config,
                "notes": ckpt.notes,
            },
        )
        _replace_dir(tmp, path)
        return path

    def load(self, path: Path, expected: ModelConfig | None = None) -> Checkpoint:
        path = Path(path)
        manifest = read_manifest(path, _CHECKPOINT_KEYS)

        try:
            cfg = ModelConfig.model_validate(manifest["model_config"])
        except ValueError as e:
            raise CheckpointLoadError(path, "model_config", str(e)) from e
        if expected is not None:
            for key, value in expected.model_dump().items():
                if getattr(cfg, key) != value:
                    raise CheckpointLoadError(
                        path, f"model_config.{key}", f"found {getattr(cfg, key)}, expected {value}"
                    )

        n_items, prompt_len = int(manifest["n_items"]), int(manifest["prompt_len"])
        vocab = ItemVocabulary(keys=tuple((d, i) for d, i in manifest["vocab"]))
        if len(vocab) != n_items:
            raise CheckpointLoadError(path, "vocab", f"{len(vocab)} keys for {n_items} items")

        # Initial weights are overwritten below; keep the global stream untouched.
        with torch.random.fork_rng(devices=[]):
            model = KGBridgeModel(
                cfg,
                n_items,
                PromptBank(PromptKind.SHARED, torch.zeros(prompt_len, cfg.dim)),
                PromptBank(PromptKind.SPECIFIC, torch.zeros(prompt_len, cfg.dim)),
            )
        state: dict[str, torch.Tensor] = {}
        for name, tensor in model.state_dict().items():
            shape = tuple(tensor.shape)
            recorded = tuple(manifest["arrays"].get(name, ()))
            if recorded != shape:
                raise CheckpointLoadError(
                    path, name, f"recorded shape {list(recorded)} != model shape {list(shape)}"
                )
            state[name] = read_array(path / _file_name(name), shape, name)
        model.load_state_dict(state)

        trainable: list[str] = list(manifest["trainable"])
        params = dict(model.named_parameters())
        unknown = [n for n in trainable if n not in params]
        if unknown:
            raise CheckpointLoadError(path, "trainable", f"unknown parameters {unknown}")
        if trainable:
            for name, param in params.items():
                param.requires_grad_(name in trainable)

        optimizer_state = None
        opt = manifest["optimizer"]
        if opt["hyper"]:
            states: dict[int, dict[str, torch.Tensor]] = {}
            for index, name in enumerate(trainable):
                if name not in opt["steps"]:
                    continue
                shape = tuple(params[name].shape)
                states[index] = {
                    "step": torch.tensor(float(opt["steps"][name])),
                    "exp_avg": read_array(path / _file_name(f"adam.{name}.exp_avg"), shape, name),
                    "exp_avg_sq": read_array(
                        path / _file_name(f"adam.{name}.exp_avg_sq"), shape, name
                    ),
                }
            hyper = dict(opt["hyper"])
            hyper["betas"] = tuple(hyper["betas"])
            optimizer_state = {"state": states, "param_groups": [hyper]}

        try:
            rng_state = torch.frombuffer(
                bytearray(base64.b64decode(manifest["rng_state"])), dtype=torch.uint8
            ).clone()
        except ValueError as e:
            raise CheckpointLoadError(path, "rng_state", str(e)) from e

        best = manifest["best_valid_metric"]
        return Checkpoint(
            stage=TrainingStage(manifest["stage"]),
            model=model,
            vocab=vocab,
            epoch=int(manifest["epoch"]),
            best_epoch=int(manifest["best_epoch"]),
            best_valid_metric=float("-inf") if best is None else float(best),
            epochs_without_improvement=int(manifest["epochs_without_improvement"]),
            loss_history=[float(x) for x in manifest["loss_history"]],
            valid_history=[float(x) for x in manifest["valid_history"]],
            trainable=trainable,
            optimizer_state=optimizer_state,
            rng_state=rng_state,
            train_config=manifest["train_config"],
            notes=manifest["notes"],
        )
