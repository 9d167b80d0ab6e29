"""Predict and Action stages: CQI prediction from monitoring records and the
priority-greedy PRB allocator with HD/SD tiering."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..features import FeatureSet, apply_transform, feature_availability_check
from ..ingest import CQI_MAX, CQI_MIN, MonitoringRecord, round_half_away
from ..kb import PolicySet
from .config import EnvConfig, SlaSpec
from .env import FIXED, HD, SD, ActionEvent


@dataclass(frozen=True)
class DeployedModel:
    model_id: str
    model: object
    feature_set: FeatureSet


@dataclass
class Prediction:
    available: bool
    cqi: dict[str, int] = field(default_factory=dict)
    raw: dict[str, float] = field(default_factory=dict)
    missing: list[str] = field(default_factory=list)


def predict_step(deployed: DeployedModel, records: list[MonitoringRecord]) -> Prediction:
    """Per-UE CQI from the deployed model, rounded and clamped to 1..15.

    If the records lack any base feature of the model's feature set the
    prediction is unavailable and the caller falls back.
    """
    if not records:
        return Prediction(True)
    fs = deployed.feature_set
    fields = set(records[0].metrics)
    for r in records[1:]:
        fields &= set(r.metrics)
    missing = feature_availability_check(fs, fields)
    if missing:
        return Prediction(False, missing=missing)
    base = {b: np.array([r.metrics[b] for r in records], dtype=float) for b in fs.base_features}
    scaled = {b: fs.normalization.scale(b, v) for b, v in base.items()}
    X = np.column_stack([apply_transform(t, scaled[b]) for b, t in fs.expanded_features]) if fs.expanded_features else np.empty((len(records), 0))
    yhat = deployed.model.predict(X)
    cqi = np.clip(round_half_away(yhat), CQI_MIN, CQI_MAX).astype(int)
    ids = [r.ue_id for r in records]
    return Prediction(True, dict(zip(ids, cqi.tolist())), dict(zip(ids, map(float, yhat))))


@dataclass(frozen=True)
class UEView:
    """What the controller knows about one UE this tick."""

    ue_id: str
    gnb_id: str
    slice_id: str
    tier: str
    demand_bps: float
    cqi_est: int


def slice_order(specs: dict[str, SlaSpec], policies: PolicySet | None = None) -> list[str]:
    """Highest priority first; an explicit policy list wins over SLA priorities."""
    if policies is not None and policies.slice_priorities:
        listed = [s for s in policies.slice_priorities if s in specs]
        rest = sorted((s for s in specs if s not in listed), key=lambda s: (specs[s].priority, s))
        return listed + rest
    return sorted(specs, key=lambda s: (specs[s].priority, s))


def prbs_needed(rate_bps: float, cqi: int, cfg: EnvConfig, gnb_id: str) -> int:
    per_prb = cfg.gnb(gnb_id).prb_bandwidth_hz * cfg.efficiency(max(CQI_MIN, min(CQI_MAX, int(cqi))))
    return int(math.ceil(rate_bps / per_prb - 1e-9))


def _rate(v: UEView, tier: str, spec: SlaSpec, cfg: EnvConfig) -> float:
    if tier == FIXED:
        demand = v.demand_bps
    else:
        demand = cfg.hd_bps if tier == HD else cfg.sd_bps
    return max(spec.min_throughput_bps, demand)


@dataclass
class AllocationPlan:
    allocations: dict
    tiers: dict[str, str]
    degraded: list[str]
    starved: list[str]


def allocate(
    views: list[UEView],
    cfg: EnvConfig,
    specs: dict[str, SlaSpec],
    reserve_prbs: int = 0,
    background: dict | None = None,
    shutdown=(),
    policies: PolicySet | None = None,
) -> AllocationPlan:
    """Greedy PRB plan by slice priority.

    Every UE gets the fewest PRBs meeting max(SLA minimum, tier demand) at its
    estimated CQI, and the top slice also gets ``reserve_prbs`` per gNB. When a
    cell is short, video slices below the top drop from HD to SD starting
    with the lowest priority; the deepest degradation needed by any cell
    applies everywhere so no slice is degraded while a lower one keeps HD. If
    that still does not fit, lower slices are starved in priority order, and
    the top slice drops to SD only when its own HD need exceeds a cell.
    """
    background = background or {}
    order = [s for s in slice_order(specs, policies) if s not in set(shutdown)]
    top = order[0] if order else None
    by_gnb: dict[str, list[UEView]] = {g.id: [] for g in cfg.gnbs}
    for v in views:
        if v.slice_id in order:
            by_gnb[v.gnb_id].append(v)
    video = {s for s in order if any(v.slice_id == s and v.tier != FIXED for v in views)}
    degrade_seq = [s for s in reversed(order) if s in video]
    lower = [s for s in degrade_seq if s != top]

    def tiers_at(depth: int) -> dict[str, str]:
        low = set(degrade_seq[:depth])
        return {v.ue_id: (FIXED if v.tier == FIXED else (SD if v.slice_id in low else HD)) for v in views}

    def need(g: str, tiers) -> dict[str, int]:
        return {v.ue_id: prbs_needed(_rate(v, tiers[v.ue_id], specs[v.slice_id], cfg), v.cqi_est, cfg, g) for v in by_gnb[g]}

    budget = {g.id: g.total_prbs - int(background.get(g.id, 0)) for g in cfg.gnbs}
    reserve_top = reserve_prbs if top else 0
    depth = 0
    for g in cfg.gnbs:
        while depth < len(lower):
            if sum(need(g.id, tiers_at(depth)).values()) + reserve_top <= budget[g.id]:
                break
            depth += 1
    if top in video and depth == len(lower):
        # lower slices can be starved; the top slice degrades only if it cannot fit alone
        for g in cfg.gnbs:
            n = need(g.id, tiers_at(depth))
            if sum(n[v.ue_id] for v in by_gnb[g.id] if v.slice_id == top) > budget[g.id]:
                depth += 1
                break
    tiers = tiers_at(depth)
    allocations: dict = {}
    starved: list[str] = []
    for g in cfg.gnbs:
        left = max(budget[g.id], 0)
        n = need(g.id, tiers)
        cell: dict = {}
        for s in order:
            ues = {}
            for v in sorted((v for v in by_gnb[g.id] if v.slice_id == s), key=lambda v: v.ue_id):
                give = min(n[v.ue_id], left)
                if give < n[v.ue_id] and s not in starved:
                    starved.append(s)
                ues[v.ue_id] = give
                left -= give
            reserve = min(reserve_prbs, left) if s == top else 0
            left -= reserve
            if ues or reserve:
                cell[s] = {"ues": ues, "reserve": reserve}
        allocations[g.id] = cell
    return AllocationPlan(allocations, tiers, degrade_seq[:depth], starved)


def decide_action(
    views: list[UEView],
    cfg: EnvConfig,
    specs: dict[str, SlaSpec],
    tick: int,
    *,
    reserve_prbs: int = 0,
    surge_reserve_prbs: int = 0,
    anomaly_class=None,
    current_model_id: str | None = None,
    predict_unavailable: bool = False,
    policies: PolicySet | None = None,
    ledger=None,
    background: dict | None = None,
    shutdown=(),
) -> list[ActionEvent]:
    """Network-loop allocation plus internal-loop responses, in a fixed order.

    Internal loop: a missing prediction raises monitoring to fine; a
    categorized anomaly with a recommended model swaps to it, and a surge
    raises the top slice's reserve. The shutdown of a slice is never decided
    here; it only comes from a scenario script.
    """
    actions: list[ActionEvent] = []

    def emit(kind, payload):
        actions.append(ActionEvent(tick, kind, payload, len(actions)))

    if predict_unavailable:
        emit("set_monitoring_level", {"level": "fine"})
    if anomaly_class is not None:
        rec = getattr(anomaly_class, "recommended_model_id", "")
        if rec and rec != current_model_id:
            emit("swap_model", {"model_id": rec, "cause": anomaly_class.name})
        if anomaly_class.name == "mie_surge" and surge_reserve_prbs > reserve_prbs:
            reserve_prbs = surge_reserve_prbs
            emit("reserve_resources", {"slice": slice_order(specs, policies)[0], "prbs": reserve_prbs})
    plan = allocate(views, cfg, specs, reserve_prbs, background, shutdown, policies)
    emit("reallocate_prbs", {"allocations": plan.allocations})
    current = {v.ue_id: v.tier for v in views}
    for kind, want, have in (("degrade_to_sd", SD, HD), ("restore_hd", HD, SD)):
        ues = sorted(u for u, t in plan.tiers.items() if t == want and current[u] == have)
        if ues:
            emit(kind, {"ues": ues})
    if plan.starved:
        # physical remedies the plant does not model are logged for operators
        emit("advisory", {"starved": plan.starved, "suggest": ["handover", "cell_breathing", "tx_power"]})
    return actions
