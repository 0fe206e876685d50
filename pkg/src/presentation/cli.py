"""
Presentation Layer - Command Line Interface

argparse front end with one verb per experiment operation:

    kge-train        train TransE and write KG statistics
    run              full pipeline for one seed
    ablate           ablation variants over all seeds
    sweep-sparsity   metrics vs fraction of KG triples removed
    sweep-lambda     metrics vs disentanglement weight
    synth            generate a synthetic two-domain corpus
    report           aggregate metric CSVs with paired t-tests
"""

from __future__ import annotations

import argparse
import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from src.application.corpus_service import CorpusService
from src.application.experiment_service import (
    ALL_VARIANTS,
    ExperimentConfig,
    ExperimentService,
    RunOptions,
)
from src.application.kge_service import KgeService
from src.application.synthetic_service import SyntheticService
from src.domain.exceptions import KGBridgeError
from src.domain.synthetic import SyntheticSpec
from src.domain.value_objects import AblationFlag
from src.infrastructure.config import settings

logger = logging.getLogger(__name__)


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


# ============================================================================
# Parser
# ============================================================================


def _add_experiment_flags(parser: argparse.ArgumentParser, out_required: bool = False) -> None:
    parser.add_argument("--config", type=Path, required=True, help="Experiment config JSON")
    parser.add_argument(
        "--out-dir", type=Path, required=out_required, help="Output root (overrides config)"
    )
    parser.add_argument("--task", help="Task name")
    parser.add_argument("--source", help="Source domain")
    parser.add_argument("--target", help="Target domain")
    parser.add_argument("--min-len", type=int, help="Minimum interactions per user")
    parser.add_argument("--min-rating", type=float, help="Keep ratings above this value")
    parser.add_argument(
        "--restrict-to-linked", action="store_true", default=None, help="Drop unlinked items"
    )
    parser.add_argument("--kge-epochs", type=int, help="TransE epochs")
    parser.add_argument("--dim", type=int, help="Embedding dimension (KGE and model)")
    parser.add_argument("--prompt-len", type=int, help="Prompts per bank")
    parser.add_argument("--strategy", help="Prompt generator strategy")
    parser.add_argument("--pretrain-epochs", type=int, help="Pretraining epoch budget")
    parser.add_argument("--finetune-epochs", type=int, help="Fine-tuning epoch budget")
    parser.add_argument("--learning-rate", type=float, help="Adam step size (both stages)")
    parser.add_argument("--batch-size", type=int, help="Sequences per step (both stages)")
    parser.add_argument("--patience", type=int, help="Early-stopping patience (both stages)")
    parser.add_argument("--lam", type=float, help="Disentanglement weight")
    parser.add_argument("--tau", type=float, help="InfoNCE temperature")
    parser.add_argument("--ks", type=_int_list, help="Cutoffs, e.g. 3,5,10,20")
    parser.add_argument(
        "--no-history-mask",
        dest="history_mask",
        action="store_false",
        default=None,
        help="Rank context items too",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgbridge",
        description="Knowledge-guided prompt learning for cross-domain sequential recommendation",
    )
    parser.add_argument("--log-level", default=None, help=f"Default {settings.log_level}")
    sub = parser.add_subparsers(dest="command", required=True)

    kge = sub.add_parser("kge-train", help="Train TransE and write KG statistics")
    kge.add_argument("--config", type=Path, required=True, help="Experiment config JSON")
    kge.add_argument("--out-dir", type=Path, required=True, help="KGE model directory")
    kge.add_argument("--seed", type=int, default=0)
    kge.add_argument("--kge-epochs", type=int, help="TransE epochs")
    kge.add_argument("--dim", type=int, help="Embedding dimension")

    run = sub.add_parser("run", help="Full pipeline for one seed")
    _add_experiment_flags(run, out_required=True)
    run.add_argument("--seed", type=int, required=True)
    run.add_argument("--variant", default="full", help="full or +-joined ablation flags")

    ablate = sub.add_parser("ablate", help="Run ablation variants")
    _add_experiment_flags(ablate)
    ablate.add_argument("--seeds", type=_int_list, help="Comma-separated seeds")
    ablate.add_argument(
        "--variants",
        type=_str_list,
        default=ALL_VARIANTS,
        help=f"Comma-separated, default {','.join(ALL_VARIANTS)}",
    )

    sparsity = sub.add_parser("sweep-sparsity", help="Metrics vs KG triples removed")
    _add_experiment_flags(sparsity)
    sparsity.add_argument("--seeds", type=_int_list, help="Comma-separated seeds")
    sparsity.add_argument("--ratios", type=_float_list, default=None, help="e.g. 0,0.2,0.4")

    lam = sub.add_parser("sweep-lambda", help="Metrics vs disentanglement weight")
    _add_experiment_flags(lam)
    lam.add_argument("--seeds", type=_int_list, help="Comma-separated seeds")
    lam.add_argument("--lambdas", type=_float_list, default=None, help="e.g. 0.002,0.003")

    synth = sub.add_parser("synth", help="Generate a synthetic two-domain corpus")
    synth.add_argument(
        "--out-dir", type=Path, default=None, help=f"Default {settings.data_dir}"
    )
    synth.add_argument("--domains", type=_str_list, default=["source", "target"])
    synth.add_argument("--n-users", type=int, default=200)
    synth.add_argument("--n-items", type=int, default=50)
    synth.add_argument("--shared", type=int, default=3, help="Shared relations")
    synth.add_argument("--specific", type=int, default=2, help="Specific relations per domain")
    synth.add_argument("--values-per-relation", type=int, default=5)
    synth.add_argument("--strength", type=float, default=0.8, help="Pattern strength in [0, 1]")
    synth.add_argument("--seed", type=int, default=0)

    report = sub.add_parser("report", help="Aggregate metric CSVs")
    report.add_argument("metrics", nargs="+", type=Path, help="Metric CSV files")
    report.add_argument("--baseline", default="full", help="Baseline system name")
    report.add_argument("--out", type=Path, help="Summary CSV path")
    return parser


# ============================================================================
# Config resolution
# ============================================================================


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file first, CLI flags on top."""
    cfg = ExperimentConfig.from_file(args.config)
    data: dict[str, Any] = cfg.model_dump()

    top = {
        "task": args.task,
        "source": args.source,
        "target": args.target,
        "min_len": args.min_len,
        "min_rating": args.min_rating,
        "restrict_to_linked": args.restrict_to_linked,
        "ks": args.ks,
        "history_mask": args.history_mask,
        "output_dir": args.out_dir,
        "seeds": getattr(args, "seeds", None),
    }
    data.update({k: v for k, v in top.items() if v is not None})
    if getattr(args, "seed", None) is not None and args.command == "run":
        data["seeds"] = [args.seed]

    if args.dim is not None:
        data["kge"]["dim"] = args.dim
        data["model"]["dim"] = args.dim
    if args.kge_epochs is not None:
        data["kge"]["epochs"] = args.kge_epochs
    if args.prompt_len is not None:
        data["prompt"]["prompt_len"] = args.prompt_len
    if args.strategy is not None:
        data["prompt"]["strategy"] = args.strategy

    for stage, epochs in (("pretrain", args.pretrain_epochs), ("finetune", args.finetune_epochs)):
        if epochs is not None:
            data[stage]["max_epochs"] = epochs
        for key in ("learning_rate", "batch_size", "patience"):
            value = getattr(args, key)
            if value is not None:
                data[stage][key] = value
    for key in ("lam", "tau"):
        value = getattr(args, key)
        if value is not None:
            data["finetune"][key] = value

    return ExperimentConfig.model_validate(data)


# ============================================================================
# Commands
# ============================================================================


def _cmd_kge_train(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.from_file(args.config)
    kge_cfg = cfg.kge.model_copy(
        update={
            "seed": args.seed,
            **({"epochs": args.kge_epochs} if args.kge_epochs is not None else {}),
            **({"dim": args.dim} if args.dim is not None else {}),
        }
    )
    kg, partition = CorpusService().load_kg_and_partition(cfg.kg)
    model = KgeService().train(kg, partition, kge_cfg, args.out_dir)
    print(f"TransE: {len(model.entity_ids)} entities, {len(model.relation_ids)} relations → {args.out_dir}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    cfg.check_paths()
    report = ExperimentService().run_seed(
        cfg, args.seed, RunOptions(flags=AblationFlag.parse_variant(args.variant))
    )
    for k in report.ks:
        print(f"K={k:<3d} recall={report.recall(k):.6f} ndcg={report.ndcg(k):.6f}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    table = ExperimentService().run_ablation(resolve_config(args), args.variants)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def _cmd_sweep_sparsity(args: argparse.Namespace) -> int:
    table = ExperimentService().run_sparsity_sweep(resolve_config(args), args.ratios)
    print(table.to_string(index=False))
    return 0


def _cmd_sweep_lambda(args: argparse.Namespace) -> int:
    table = ExperimentService().run_lambda_sweep(resolve_config(args), args.lambdas)
    print(table.to_string(index=False))
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    if len(args.domains) != 2:
        raise ValueError(f"Exactly two domains are required, got {args.domains}")
    spec = SyntheticSpec(
        domains=tuple(args.domains),
        n_users=args.n_users,
        n_items=args.n_items,
        n_shared_relations=args.shared,
        n_specific_relations=args.specific,
        values_per_relation=args.values_per_relation,
        pattern_strength=args.strength,
        seed=args.seed,
    )
    path = SyntheticService().generate(spec, args.out_dir or settings.data_dir)
    print(f"Config written to {path}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    summaries = ExperimentService().report(args.metrics, args.baseline, args.out)
    for summary in summaries:
        for row in summary.rows:
            p = "n/a" if row.p_value is None else f"{row.p_value:.4g}"
            print(
                f"{summary.system:<24} {row.metric}@{row.k:<3d} "
                f"mean={row.mean:.6f} diff={row.mean_difference:+.6f} p={p}"
            )
    return 0


COMMANDS = {
    "kge-train": _cmd_kge_train,
    "run": _cmd_run,
    "ablate": _cmd_ablate,
    "sweep-sparsity": _cmd_sweep_sparsity,
    "sweep-lambda": _cmd_sweep_lambda,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point for the ``kgbridge`` command."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
    )
    settings.apply_torch_settings()

    try:
        return COMMANDS[args.command](args)
    except (KGBridgeError, FileNotFoundError, ValueError, KeyError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1
