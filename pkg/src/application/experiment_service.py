"""
Application Layer - Experiment Service

Runs the full pipeline (load → partition → KGE → prompt init → pretrain →
fine-tune → evaluate) once per seed, and builds the ablation suite, the KG
sparsity sweep, the λ sweep and multi-seed summaries on top of it.

Directory layout below ``output_dir``:

    <task>/                         base experiment
    ├── seed_<n>/
    │   ├── kge/                    TransE model + statistics
    │   ├── pretrain_<variant>/     {last,best}; shared by fine-tune-only variants
    │   └── <variant>/              run_record.json, run_manifest.json,
    │                               finetune/{last,best}, metrics*.csv
    ├── metrics.csv / ablation.csv / lambda.csv / ...
    └── sparsity_<ratio>/seed_<n>/  perturbed-KG runs (same layout)
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from src.domain.corpus import (
    MIN_SEQUENCE_LENGTH,
    corpus_statistics,
    partition_relations,
    perturb_kg_sparsity,
    removal_count,
)
from src.domain.entities import AggregateSummary, MetricReport
from src.domain.exceptions import ExperimentStageError
from src.domain.kge import KgeConfig
from src.domain.metrics import DEFAULT_KS, METRIC_NAMES, aggregate_and_test, mean_report
from src.domain.prompt_bank import PromptGeneratorConfig, generate_prompt_bank
from src.domain.run import RunRecord, RunStage
from src.domain.seqmodel import ModelConfig, build_model
from src.domain.value_objects import (
    FULL_VARIANT,
    AblationFlag,
    EvalPhase,
    PromptKind,
    RunId,
    TrainingStage,
    derive_seed,
    variant_name,
)
from src.infrastructure.checkpoint_store import FORMAT_VERSION
from src.infrastructure.config import settings
from src.infrastructure.excel_renderer import ExcelRenderer
from src.infrastructure.report_writer import (
    read_metric_csv,
    write_metric_csv,
    write_summary_csv,
    write_sweep_csv,
    write_table,
)
from src.infrastructure.run_storage import FileRunStore

from .corpus_service import CorpusService
from .evaluation_service import evaluate_model
from .kge_service import KgeService
from .training_service import TrainConfig, TrainingService, apply_ablation

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = [0, 1, 2, 3, 4]
DEFAULT_SPARSITY_RATIOS = [0.0, 0.2, 0.4, 0.6, 0.8]
DEFAULT_LAMBDAS = [0.002, 0.003, 0.004, 0.005]
ALL_VARIANTS = [
    FULL_VARIANT,
    AblationFlag.NO_KG_INIT.value,
    AblationFlag.NO_SHARED.value,
    AblationFlag.NO_SPEC.value,
    AblationFlag.NO_DISEN.value,
    AblationFlag.NO_FREEZE.value,
]


# ============================================================================
# Configuration
# ============================================================================


class ExperimentConfig(BaseModel):
    """Everything one cross-domain task needs, for every seed."""

    task: str = Field("experiment", description="Task name, e.g. movie_to_book")
    interactions: dict[str, Path] = Field(..., description="Domain → interaction TSV")
    kg: dict[str, Path] = Field(..., description="Domain → KG triple TSV")
    links: dict[str, Path] = Field(default_factory=dict, description="Domain → item-entity TSV")
    source: str = Field(..., description="Source domain")
    target: str = Field(..., description="Target domain (fine-tuned and evaluated)")

    min_len: int = Field(MIN_SEQUENCE_LENGTH, ge=MIN_SEQUENCE_LENGTH)
    min_rating: float | None = Field(None, description="Keep ratings above this")
    restrict_to_linked: bool = Field(False, description="Drop items without a KG entity")
    shuffle_users: bool = Field(True, description="Replace user ids with opaque ids")

    kge: KgeConfig = Field(default_factory=KgeConfig)
    prompt: PromptGeneratorConfig = Field(default_factory=PromptGeneratorConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: TrainConfig = Field(
        default_factory=lambda: TrainConfig(stage=TrainingStage.PRETRAIN)
    )
    finetune: TrainConfig = Field(
        default_factory=lambda: TrainConfig(stage=TrainingStage.FINETUNE)
    )

    ks: list[int] = Field(default_factory=lambda: list(DEFAULT_KS))
    seeds: list[int] = Field(default_factory=lambda: list(DEFAULT_SEEDS))
    history_mask: bool = Field(True, description="Exclude context items from ranking")
    output_dir: Path = Field(default_factory=lambda: settings.output_dir)

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if not self.seeds:
            raise ValueError("At least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"Seeds must be distinct, got {self.seeds}")
        if any(k <= 0 for k in self.ks):
            raise ValueError(f"K must be positive, got {self.ks}")
        if self.kge.dim != self.model.dim:
            raise ValueError(
                f"KGE dimension ({self.kge.dim}) must equal model dimension ({self.model.dim})"
            )
        if self.source == self.target:
            raise ValueError("Source and target domains must differ")
        for name, mapping in (("interactions", self.interactions), ("kg", self.kg)):
            missing = [d for d in (self.source, self.target) if d not in mapping]
            if missing:
                raise ValueError(f"No {name} file for domain(s) {missing}")
        self.pretrain = self.pretrain.model_copy(update={"stage": TrainingStage.PRETRAIN})
        self.finetune = self.finetune.model_copy(update={"stage": TrainingStage.FINETUNE})
        return self

    @classmethod
    def from_file(cls, path: Path | str, **overrides: Any) -> ExperimentConfig:
        """
        Load a JSON config; relative data paths resolve against its folder.

        ``overrides`` replace top-level fields (None values are ignored).
        """
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        for key in ("interactions", "kg", "links"):
            data[key] = {
                domain: str(p if Path(p).is_absolute() else path.parent / p)
                for domain, p in data.get(key, {}).items()
            }
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.model_validate(data)

    def with_overrides(self, **overrides: Any) -> ExperimentConfig:
        data = self.model_dump()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return type(self).model_validate(data)

    def check_paths(self) -> None:
        """Raise FileNotFoundError listing every missing input file."""
        missing = [
            str(p)
            for mapping in (self.interactions, self.kg, self.links)
            for p in mapping.values()
            if not Path(p).exists()
        ]
        if missing:
            raise FileNotFoundError(f"Missing input files: {', '.join(missing)}")

    def for_seed(self, seed: int) -> ExperimentConfig:
        """Copy with every stage seeded from ``seed``."""
        return self.model_copy(
            update={
                "seeds": [seed],
                "kge": self.kge.model_copy(update={"seed": seed}),
                "prompt": self.prompt.model_copy(update={"seed": seed}),
                "pretrain": self.pretrain.model_copy(
                    update={"seed": seed, "history_mask": self.history_mask}
                ),
                "finetune": self.finetune.model_copy(
                    update={"seed": seed, "history_mask": self.history_mask}
                ),
            }
        )

    @property
    def task_slug(self) -> str:
        return re.sub(r"[^A-Za-z0-9_.-]", "_", self.task) or "experiment"

    @property
    def task_dir(self) -> Path:
        return Path(self.output_dir) / self.task_slug


class RunOptions(BaseModel):
    """What varies between runs of one seed."""

    flags: frozenset[AblationFlag] = Field(default_factory=frozenset)
    label: str | None = Field(None, description="Run directory / system name")
    lam: float | None = Field(None, ge=0.0, description="Fine-tune λ override")
    remove_ratio: float = Field(0.0, ge=0.0, lt=1.0, description="KG triples removed")

    @property
    def variant(self) -> str:
        return self.label or variant_name(self.flags)


# ============================================================================
# Service
# ============================================================================


class ExperimentService:
    """
    Application service for experiments.

    Handles:
    - Per-seed pipeline runs with stage tracking and manifests
    - Ablation variants, reusing pretraining when only fine-tuning differs
    - KG sparsity and λ sweeps
    - Multi-seed summaries with paired t-tests
    """

    def __init__(
        self,
        corpus_service: CorpusService | None = None,
        kge_service: KgeService | None = None,
        training_service: TrainingService | None = None,
        run_store: FileRunStore | None = None,
    ) -> None:
        self.corpus_service = corpus_service or CorpusService()
        self.kge_service = kge_service or KgeService()
        self.training_service = training_service or TrainingService()
        self.run_store = run_store or FileRunStore()

    # ------------------------------------------------------------------
    # Single run
    # ------------------------------------------------------------------

    @contextmanager
    def _stage(self, record: RunRecord, run_dir: Path, stage: RunStage) -> Iterator[None]:
        record.enter(stage)
        self.run_store.save(record, run_dir)
        logger.info(f"[{record.run_id}] stage {stage.value}")
        try:
            yield
        except Exception as e:
            record.fail(f"{type(e).__name__}: {e}")
            self.run_store.save(record, run_dir)
            logger.error(f"[{record.run_id}] stage {stage.value} failed: {e}")
            raise ExperimentStageError(stage.value, e) from e

    def run_seed(
        self, cfg: ExperimentConfig, seed: int, options: RunOptions | None = None
    ) -> MetricReport:
        """
        Execute the pipeline for one seed.

        Returns:
            Test-phase MetricReport whose ``system`` is the variant label
        """
        options = options or RunOptions()
        cfg = cfg.for_seed(seed)
        variant = options.variant
        root = cfg.task_dir
        if options.remove_ratio > 0:
            root = root / f"sparsity_{options.remove_ratio:.2f}"
        seed_dir = root / f"seed_{seed}"
        run_dir = seed_dir / variant

        pre_flags = frozenset(f for f in options.flags if f.affects_pretraining)
        pre_cfg = cfg.pretrain.model_copy(update={"ablation_flags": pre_flags})
        ft_update: dict[str, Any] = {"ablation_flags": options.flags}
        if options.lam is not None:
            ft_update["lam"] = options.lam
        ft_cfg = cfg.finetune.model_copy(update=ft_update)

        record = RunRecord(
            run_id=str(RunId.generate(cfg.task, seed, f"{variant}|{options.remove_ratio}")),
            task=cfg.task,
            seed=seed,
            variant=variant,
        )
        record.start()
        manifest: dict[str, Any] = {
            "format_version": FORMAT_VERSION,
            "run_id": record.run_id,
            "task": cfg.task,
            "seed": seed,
            "variant": variant,
            "ablation_flags": sorted(f.value for f in options.flags),
            "remove_ratio": options.remove_ratio,
            "config": cfg.model_dump(mode="json"),
            "pretrain": pre_cfg.model_dump(mode="json"),
            "finetune": ft_cfg.model_dump(mode="json"),
            "seeds": {
                "user_shuffle": derive_seed(seed, "user_shuffle"),
                "kg_sparsity": derive_seed(seed, "kg_sparsity"),
                "model_init": derive_seed(seed, "model_init"),
            },
        }
        self.run_store.save_manifest(run_dir, manifest)

        with self._stage(record, run_dir, RunStage.LOAD):
            corpus = self.corpus_service.prepare(
                cfg.interactions,
                cfg.links,
                min_len=cfg.min_len,
                min_rating=cfg.min_rating,
                restrict_to_linked=cfg.restrict_to_linked,
                shuffle_seed=manifest["seeds"]["user_shuffle"] if cfg.shuffle_users else None,
            )
            target_split = corpus.splits[cfg.target]

        with self._stage(record, run_dir, RunStage.PARTITION):
            kg, partition = self.corpus_service.load_kg_and_partition(cfg.kg)
            n_original = len(kg)
            if options.remove_ratio > 0:
                kg = perturb_kg_sparsity(
                    kg, options.remove_ratio, manifest["seeds"]["kg_sparsity"]
                )
                partition = partition_relations(kg)
            manifest["kg"] = {
                "original_triples": n_original,
                "removed_triples": removal_count(n_original, options.remove_ratio),
                "triples": len(kg),
                "entities": len(kg.entities),
                "shared_relations": len(partition.shared),
                "specific_relations": len(partition.specific),
            }
            write_table(
                pd.DataFrame(corpus_statistics(corpus.splits, kg)), run_dir / "corpus_statistics.csv"
            )

        with self._stage(record, run_dir, RunStage.KGE):
            kge_dir = seed_dir / "kge"
            kge_model = self.kge_service.train(kg, partition, cfg.kge, kge_dir)
            record.add_artifact("kge", str(kge_dir))

        with self._stage(record, run_dir, RunStage.PROMPT_INIT):
            shared_rel, spec_rel = self.kge_service.relation_matrices(kge_model, partition)
            shared = generate_prompt_bank(shared_rel, cfg.prompt, PromptKind.SHARED)
            spec = generate_prompt_bank(
                spec_rel, cfg.prompt, PromptKind.SPECIFIC, shared_relations=shared_rel
            )
            (shared, spec), _ = apply_ablation(options.flags, shared, spec, seed=seed)
            model = build_model(
                cfg.model, len(corpus.vocab), shared, spec, manifest["seeds"]["model_init"]
            )

        with self._stage(record, run_dir, RunStage.PRETRAIN):
            pre_dir = seed_dir / f"pretrain_{variant_name(pre_flags)}"
            pretrained = self.training_service.pretrain(
                model, corpus.vocab, corpus.splits, pre_cfg, pre_dir
            )
            record.add_artifact("pretrain", str(pre_dir / "best"))

        with self._stage(record, run_dir, RunStage.FINETUNE):
            ft_dir = run_dir / "finetune"
            finetuned = self.training_service.finetune(pretrained, target_split, ft_cfg, ft_dir)
            record.add_artifact("finetune", str(ft_dir / "best"))

        with self._stage(record, run_dir, RunStage.EVALUATE):
            report = evaluate_model(
                finetuned.model,
                corpus.vocab,
                target_split,
                EvalPhase.TEST,
                history_mask=cfg.history_mask,
                ks=cfg.ks,
                system=variant,
                seed=seed,
            )
            alternate = evaluate_model(
                finetuned.model,
                corpus.vocab,
                target_split,
                EvalPhase.TEST,
                history_mask=not cfg.history_mask,
                ks=cfg.ks,
                system=variant,
                seed=seed,
            )
            metrics_path = write_metric_csv([report], run_dir / "metrics.csv")
            alt_name = (
                "metrics_no_history_mask.csv" if cfg.history_mask else "metrics_history_mask.csv"
            )
            write_metric_csv([alternate], run_dir / alt_name)
            record.add_artifact("metrics", str(metrics_path))

        manifest.update(
            {
                "vocab_size": len(corpus.vocab),
                "pretrain_best_epoch": pretrained.best_epoch,
                "finetune_best_epoch": finetuned.best_epoch,
                "shared_bank_drift": finetuned.notes.get("shared_bank_drift", 0.0),
            }
        )
        self.run_store.save_manifest(run_dir, manifest)
        record.complete(
            result={
                "metrics": report.model_dump(mode="json"),
                "shared_bank_drift": manifest["shared_bank_drift"],
            }
        )
        self.run_store.save(record, run_dir)
        logger.info(
            f"[{record.run_id}] done: "
            + ", ".join(f"NDCG@{k}={report.ndcg(k):.4f}" for k in report.ks)
        )
        return report

    # ------------------------------------------------------------------
    # Experiments
    # ------------------------------------------------------------------

    def _run_seeds(self, cfg: ExperimentConfig, options: RunOptions) -> list[MetricReport]:
        return [self.run_seed(cfg, seed, options) for seed in cfg.seeds]

    def run_experiment(self, cfg: ExperimentConfig) -> list[MetricReport]:
        """Full pipeline for every seed; writes ``<task>/metrics.csv``."""
        cfg.check_paths()
        reports = self._run_seeds(cfg, RunOptions())
        write_metric_csv(reports, cfg.task_dir / "metrics.csv")
        return reports

    def run_ablation(
        self, cfg: ExperimentConfig, variants: Sequence[str] | None = None
    ) -> pd.DataFrame:
        """
        Run each variant with the base seeds and tabulate mean metrics.

        Returns:
            Table with rows (task, metric@K) and one column per variant
        """
        names = list(variants or ALL_VARIANTS)
        parsed = {name: AblationFlag.parse_variant(name) for name in names}
        canonical = {name: variant_name(flags) for name, flags in parsed.items()}
        cfg.check_paths()

        by_variant: dict[str, list[MetricReport]] = {}
        for name, flags in parsed.items():
            by_variant[canonical[name]] = self._run_seeds(cfg, RunOptions(flags=flags))

        columns = list(dict.fromkeys(canonical.values()))
        table, p_values = self._comparison_table(cfg, by_variant, columns)
        out = cfg.task_dir
        write_metric_csv(
            [r for c in columns for r in by_variant[c]], out / "ablation_metrics.csv"
        )
        write_table(table, out / "ablation.csv")
        ExcelRenderer(out).render(
            table,
            "ablation",
            title=f"{cfg.task}: ablation over {len(cfg.seeds)} seeds",
            p_values=p_values,
        )
        return table

    def _comparison_table(
        self,
        cfg: ExperimentConfig,
        by_variant: dict[str, list[MetricReport]],
        columns: list[str],
    ) -> tuple[pd.DataFrame, pd.DataFrame | None]:
        means = {c: mean_report(by_variant[c]) for c in columns}
        ks = sorted(set.intersection(*(set(m.per_k) for m in means.values())))
        rows = [
            {
                "task": cfg.task,
                "metric": f"{metric}@{k}",
                **{c: getattr(means[c].per_k[k], metric) for c in columns},
            }
            for metric in METRIC_NAMES
            for k in ks
        ]
        table = pd.DataFrame(rows, columns=["task", "metric", *columns])
        if FULL_VARIANT not in by_variant:
            return table, None

        summaries = {
            c: aggregate_and_test(by_variant[c], by_variant[FULL_VARIANT])
            for c in columns
            if c != FULL_VARIANT
        }
        p_rows = []
        for metric in METRIC_NAMES:
            for k in ks:
                row: dict[str, Any] = {"task": None, "metric": None, FULL_VARIANT: None}
                for c, summary in summaries.items():
                    found = summary.find(metric, k)
                    row[c] = None if found is None else found.p_value
                p_rows.append(row)
        return table, pd.DataFrame(p_rows, columns=table.columns)

    def run_sparsity_sweep(
        self, cfg: ExperimentConfig, ratios: Sequence[float] | None = None
    ) -> pd.DataFrame:
        """Seed-averaged metrics with a fraction of KG triples removed."""
        ratios = list(DEFAULT_SPARSITY_RATIOS if ratios is None else ratios)
        bad = [r for r in ratios if not 0.0 <= r < 1.0]
        if bad:
            raise ValueError(f"Removal ratios must be in [0, 1), got {bad}")
        cfg.check_paths()

        points: list[tuple[float, MetricReport]] = []
        every: list[MetricReport] = []
        for ratio in ratios:
            reports = self._run_seeds(
                cfg, RunOptions(remove_ratio=ratio, label=FULL_VARIANT)
            )
            every.extend(r.model_copy(update={"system": f"ratio_{ratio:.2f}"}) for r in reports)
            points.append((ratio, mean_report(reports)))

        write_metric_csv(every, cfg.task_dir / "sparsity_metrics.csv")
        path = write_sweep_csv("ratio", points, cfg.task_dir / "sparsity.csv")
        return pd.read_csv(path)

    def run_lambda_sweep(
        self, cfg: ExperimentConfig, lambdas: Sequence[float] | None = None
    ) -> pd.DataFrame:
        """Fine-tune once per λ on top of one pretrained checkpoint per seed."""
        lambdas = list(DEFAULT_LAMBDAS if lambdas is None else lambdas)
        bad = [lam for lam in lambdas if lam < 0]
        if bad:
            raise ValueError(f"lambda must be >= 0, got {bad}")
        cfg.check_paths()

        points: list[tuple[float, MetricReport]] = []
        every: list[MetricReport] = []
        for lam in lambdas:
            label = f"lambda_{lam:.4f}"
            reports = self._run_seeds(cfg, RunOptions(lam=lam, label=label))
            every.extend(reports)
            points.append((lam, mean_report(reports)))

        write_metric_csv(every, cfg.task_dir / "lambda_metrics.csv")
        path = write_sweep_csv("lambda", points, cfg.task_dir / "lambda.csv")
        return pd.read_csv(path)

    # ------------------------------------------------------------------
    # Reporting
    # ------------------------------------------------------------------

    def report(
        self,
        metric_paths: Sequence[Path | str],
        baseline: str = FULL_VARIANT,
        out_path: Path | str | None = None,
    ) -> list[AggregateSummary]:
        """
        Aggregate metric CSVs per system and test each against ``baseline``.

        Writes ``summary.csv`` next to the first input unless ``out_path``
        is given.
        """
        if not metric_paths:
            raise ValueError("No metric files given")
        by_system: dict[str, list[MetricReport]] = {}
        for path in metric_paths:
            for report in read_metric_csv(path):
                by_system.setdefault(report.system, []).append(report)
        if baseline not in by_system:
            raise ValueError(f"Baseline system '{baseline}' not found in {sorted(by_system)}")

        summaries = [
            aggregate_and_test(by_system[system], by_system[baseline])
            for system in sorted(by_system)
        ]
        out = Path(out_path) if out_path else Path(metric_paths[0]).parent / "summary.csv"
        write_summary_csv(summaries, out)
        return summaries
