"""End-to-end regression workflow: generate, preprocess, select features,
train the four regressors, evaluate and combine.

Every stage is a plain function so the CLI can run them one at a time
through the knowledge base; ``run_pipeline`` chains them in memory and can
persist every artifact for checksum comparison.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import Comparison, GateConfig, SplitSpec, compare_models, metrics_report, scenario_split
from .features import (
    FeatureMatrix,
    FeatureSet,
    build_matrix,
    correlation_matrix,
    default_exclusions,
    fit_normalization,
    profile_available,
    select_features,
)
from .ingest import GeneratorConfig, generate_trace
from .kb import DatasetMeta, KnowledgeBase, ModelRecord, kb_init, sha256_hex
from .models import (
    COMPONENT_ORDER,
    CombinedModel,
    TrainConfig,
    WeightSearchResult,
    model_to_dict,
    search_combined_weights,
    train_elasticnet,
    train_gbt,
    train_lasso,
    train_random_forest,
)
from .preprocess import PreprocessConfig, RepairReport, preprocess
from .table import DataTable

PROFILES = {"full": frozenset(), "sleeping_iot": frozenset({"rsrp", "rsrq", "phr", "wb_cqi"})}
# fixed creation stamp so persisted manifests are reproducible
EPOCH = "1970-01-01T00:00:00+00:00"


@dataclass
class PipelineConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    k: int = 15
    correlation: str = "pearson"
    tune_penalties: bool = True
    models: tuple[str, ...] = COMPONENT_ORDER
    combine_step: int = 1
    deployment_profile: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d


def choose_features(train: DataTable, target: str = "wb_cqi", k: int = 15, method: str = "pearson") -> FeatureSet:
    """Rank numeric columns of the training table against the target and fit normalization."""
    names = [n for n in train.numeric_names()]
    corr = correlation_matrix(train, names, method)
    fs = select_features(corr, target, k, default_exclusions(names, target))
    return fit_normalization(train, fs)


def train_one(kind: str, X, y, cfg: TrainConfig, validation=None):
    if kind == "lasso":
        return train_lasso(X, y, cfg, validation)
    if kind == "elasticnet":
        return train_elasticnet(X, y, cfg, validation)
    if kind == "forest":
        return train_random_forest(X, y, cfg)
    if kind == "gbt":
        return train_gbt(X, y, cfg)
    raise ValueError(f"unknown model kind {kind!r}")


def combine(models: dict, Xv, yv, step: int = 1) -> tuple[CombinedModel, WeightSearchResult]:
    comps = tuple(models[k] for k in COMPONENT_ORDER)
    res = search_combined_weights([m.predict(Xv) for m in comps], yv, step)
    return CombinedModel(comps, res.weights), res


@dataclass
class PipelineResult:
    raw: DataTable
    truth: DataTable
    processed: DataTable
    removed: list[str]
    report: RepairReport
    feature_set: FeatureSet
    train: FeatureMatrix
    validation: FeatureMatrix
    models: dict
    comparison: Comparison
    weights: WeightSearchResult | None = None
    digests: dict[str, str] = field(default_factory=dict)


def run_pipeline(cfg: PipelineConfig | None = None, out: str | Path | None = None) -> PipelineResult:
    """Run the whole workflow; with ``out`` every artifact lands in a knowledge base there."""
    cfg = cfg or PipelineConfig()
    raw, truth = generate_trace(cfg.generator)
    processed, removed, report = preprocess(raw, cfg.preprocess)
    tr, va = scenario_split(processed, cfg.split)
    fs = choose_features(tr, cfg.preprocess.target, cfg.k, cfg.correlation)
    mtr, mva = build_matrix(tr, fs), build_matrix(va, fs)
    validation = (mva.X, mva.y) if cfg.tune_penalties else None
    models = {k: train_one(k, mtr.X, mtr.y, cfg.train, validation) for k in cfg.models}
    weights = None
    if set(COMPONENT_ORDER) <= set(models):
        models["combined"], weights = combine(models, mva.X, mva.y, cfg.combine_step)
    available = None
    if cfg.deployment_profile is not None:
        available = profile_available(processed.names, PROFILES[cfg.deployment_profile])
    preds = {k: m.predict(mva.X) for k, m in models.items()}
    comparison = compare_models(preds, mva.y, fs, available, cfg.gate)
    result = PipelineResult(raw, truth, processed, removed, report, fs, mtr, mva, models, comparison, weights)
    if out is not None:
        result.digests = persist(result, kb_init(out), cfg)
    return result


def persist(result: PipelineResult, kb: KnowledgeBase, cfg: PipelineConfig) -> dict[str, str]:
    """Write datasets, models and reports into ``kb``; return sha256 per artifact."""
    seed = cfg.generator.seed
    raw_id, proc_id = f"raw-{seed}", f"processed-{seed}"
    kb.put_dataset(result.raw, DatasetMeta(raw_id, "raw", "all", created_at=EPOCH))
    kb.put_dataset(result.processed, DatasetMeta(proc_id, "processed", "all", created_at=EPOCH, parent=raw_id))
    for part, fm in (("train", result.train), ("validation", result.validation)):
        t = DataTable.from_csv(fm.to_csv(result.feature_set.target))
        kb.put_dataset(t, DatasetMeta(f"features-{part}-{seed}", "feature_matrix", "all", created_at=EPOCH, parent=proc_id))
    root = kb.root
    (root / "feature_set.json").write_text(json.dumps(result.feature_set.to_dict(), indent=2, sort_keys=True) + "\n")
    (root / "repair_report.json").write_text(json.dumps(result.report.to_dict(), sort_keys=True) + "\n")
    (root / "comparison.json").write_text(result.comparison.to_json() + "\n")
    fs_id = result.feature_set.id
    for name, model in result.models.items():
        rec = ModelRecord(f"{name}-{seed}", name, fs_id, "", result.comparison.reports[name].to_dict())
        kb.register_model(rec, model_to_dict(model, fs_id), replace=True)
    return artifact_digests(root)


def artifact_digests(root: str | Path) -> dict[str, str]:
    """sha256 of every file under ``root`` keyed by relative path."""
    root = Path(root)
    return {str(p.relative_to(root)): sha256_hex(p.read_bytes()) for p in sorted(root.rglob("*")) if p.is_file()}


def validation_metrics(models: dict, fm: FeatureMatrix) -> dict:
    return {k: metrics_report(fm.y, m.predict(fm.X)) for k, m in models.items()}


__all__ = [
    "PROFILES",
    "PipelineConfig",
    "PipelineResult",
    "artifact_digests",
    "choose_features",
    "combine",
    "persist",
    "run_pipeline",
    "train_one",
    "validation_metrics",
]
