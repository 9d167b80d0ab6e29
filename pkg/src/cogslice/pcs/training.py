"""Offline preparation for the loop: collect measurement tables from the
plant, train deployable CQI models and fit the anomaly categorizer on
labeled test-traffic runs."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..anomaly import ClusterModel, kmeans_fit, label_clusters
from ..features import FeatureSet
from ..kb import KnowledgeBase, ModelRecord
from ..models import TrainConfig, model_from_dict, model_to_dict
from ..pipeline import choose_features, train_one
from ..features import build_matrix
from ..table import DataTable
from .config import EnvConfig, LoopConfig, ScenarioScript
from .control import DeployedModel, UEView, decide_action
from .env import env_init, env_step

RADIO_FIELDS = ("rsrp", "rsrq", "phr", "timing_advance", "dl_bler")


def collect_table(env_cfg: EnvConfig, script: ScenarioScript | None, ticks: int, seed: int) -> DataTable:
    """Fine-level measurements with the true CQI, under the reactive allocator."""
    state = env_init(env_cfg, seed)
    specs = env_cfg.specs
    pending: list = []
    cols: dict[str, list] = {k: [] for k in ("timestamp_ms", "ue_id", "gnb_id", "scenario", *RADIO_FIELDS, "wb_cqi")}
    name = script.name if script is not None else "none"
    for t in range(ticks):
        state = env_step(state, pending, t, env_cfg, script)
        for u in state.ues:
            m = state.metrics[u.id]
            cols["timestamp_ms"].append(t * env_cfg.tick_ms)
            cols["ue_id"].append(u.id)
            cols["gnb_id"].append(u.serving)
            cols["scenario"].append(name)
            for f in RADIO_FIELDS:
                cols[f].append(m[f])
            cols["wb_cqi"].append(float(state.true_cqi[u.id]))
        views = [UEView(u.id, u.serving, u.slice_id, u.tier, u.demand_bps, max(u.reported_cqi, 1)) for u in state.ues]
        pending = decide_action(views, env_cfg, specs, t, background=state.background_prbs, shutdown=state.shutdown)
    table = DataTable({k: np.asarray(v, dtype=object if k in ("ue_id", "gnb_id", "scenario") else float) for k, v in cols.items()})
    # rows grouped per UE so per-UE time order holds
    order = np.lexsort((table["timestamp_ms"], table["ue_id"].astype(str)))
    return table.take(order)


def train_deployed(
    table: DataTable,
    model_id: str,
    kind: str = "lasso",
    cfg: TrainConfig | None = None,
    fields=RADIO_FIELDS,
    validation: DataTable | None = None,
) -> DeployedModel:
    cfg = cfg or TrainConfig()
    sub = table.select(list(fields) + ["wb_cqi"])
    fs = choose_features(sub, "wb_cqi", k=len(fields))
    m = build_matrix(table, fs)
    val = None
    if validation is not None:
        mv = build_matrix(validation, fs)
        val = (mv.X, mv.y)
    return DeployedModel(model_id, train_one(kind, m.X, m.y, cfg, val), fs)


def register_deployed(kb: KnowledgeBase, dm: DeployedModel, kind: str, metrics: dict | None = None) -> ModelRecord:
    artifact = model_to_dict(dm.model, dm.feature_set.id)
    artifact["feature_set"] = dm.feature_set.to_dict()
    return kb.register_model(ModelRecord(dm.model_id, kind, dm.feature_set.id, "", metrics), artifact, replace=True)


def load_deployed(kb: KnowledgeBase, model_id: str) -> DeployedModel:
    art = kb.load_model_artifact(model_id)
    return DeployedModel(model_id, model_from_dict(art), FeatureSet.from_dict(art["feature_set"]))


def labeled_windows(
    env_cfg: EnvConfig,
    loop_cfg: LoopConfig,
    models: dict[str, DeployedModel],
    model_id: str,
    scripts: list[ScenarioScript],
    seeds=(0,),
    span: int = 6,
):
    """Window summaries following each script's first event, labeled by its kind.

    This is the test-traffic procedure: known anomalies are injected and the
    windows they produce become the categorizer's training data.
    """
    from .loop import run_loop, with_script_overrides

    points, names = [], []
    for script in scripts:
        ev = script.events[0]
        for seed in seeds:
            lc = dataclasses.replace(with_script_overrides(loop_cfg, script), controller="proactive")
            res = run_loop(env_cfg, lc, script, seed=seed, models=models, model_id=model_id)
            after = [w for w in res.windows if w["end"] > ev.tick][:span]
            points.extend(w["summary"] for w in after)
            names.extend([ev.kind] * len(after))
    return np.asarray(points, dtype=float), names


def fisher_scores(points, names) -> np.ndarray:
    """Between-class over within-class variance per summary dimension."""
    X = np.asarray(points, dtype=float)
    names = np.asarray(names)
    mu = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in np.unique(names):
        G = X[names == c]
        between += len(G) * (G.mean(axis=0) - mu) ** 2
        within += ((G - G.mean(axis=0)) ** 2).sum(axis=0)
    return between / np.maximum(within, 1e-12 * np.maximum(between, 1.0))


def fit_categorizer(
    points,
    names,
    k: int | None = None,
    seed: int = 0,
    recommended: dict | None = None,
    min_fisher: float = 1.0,
    max_weight: float = 10.0,
) -> ClusterModel:
    """k-means on the labeled windows, then centroids named by majority vote.

    Dimension reduction: summary dimensions whose Fisher score falls below
    ``min_fisher`` are dropped, and the rest are rescaled from the global
    spread to the within-class spread (weight sqrt(1 + F), capped at
    ``max_weight``) so that class-separating dimensions dominate distances.
    """
    k = k or 2 * len(set(names))  # a class may occupy several regimes (e.g. HD and degraded)
    F = fisher_scores(points, names)
    weights = np.where(F >= min_fisher, np.minimum(np.sqrt(1.0 + F), max_weight), 0.0)
    if not weights.any():
        weights[:] = 1.0
    cm = kmeans_fit(points, k, seed, standardize=True, n_init=10, weights=weights)
    return label_clusters(cm, points, names, recommended)


@dataclass
class Deployment:
    """Everything the proactive loop needs: models, the starting model and the categorizer."""

    models: dict[str, DeployedModel]
    model_id: str
    cluster: ClusterModel


NORMAL_MODEL = "lasso-normal"
EMERGENCY_MODEL = "lasso-mie"


def build_deployment(
    env_cfg: EnvConfig,
    loop_cfg: LoopConfig | None = None,
    *,
    train_seeds=(100, 101, 102, 103, 104),
    surge_seeds=(200, 201, 202),
    label_seeds=(21, 22, 23, 24, 25, 26),
    ticks: int = 300,
    kind: str = "lasso",
) -> Deployment:
    """Train the normal and emergency CQI models and fit the categorizer.

    The normal model learns from benign traffic. The emergency model learns
    from the post-surge rows of injected MIE runs. The categorizer is fit on
    windows after each labeled test-traffic event, and a categorized surge
    recommends the emergency model.
    """
    from .config import load_script

    loop_cfg = loop_cfg or LoopConfig()
    benign = load_script("benign")
    mie = load_script("mie_surge")
    normal = DataTable.concat([collect_table(env_cfg, benign, ticks, s) for s in train_seeds])
    surge_at = mie.first("mie_surge").tick * env_cfg.tick_ms
    surge = DataTable.concat([collect_table(env_cfg, mie, ticks, s) for s in surge_seeds])
    surge = surge.take(np.flatnonzero(surge["timestamp_ms"] >= surge_at))
    models = {
        NORMAL_MODEL: train_deployed(normal, NORMAL_MODEL, kind),
        EMERGENCY_MODEL: train_deployed(surge, EMERGENCY_MODEL, kind),
    }
    scripts = [mie, load_script("route_shift"), load_script("demand_drop")]
    points, names = labeled_windows(env_cfg, loop_cfg, models, NORMAL_MODEL, scripts, label_seeds)
    cluster = fit_categorizer(points, names, recommended={"mie_surge": EMERGENCY_MODEL})
    return Deployment(models, NORMAL_MODEL, cluster)
