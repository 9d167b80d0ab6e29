"""The tick loop: State -> Monitor -> Predict -> anomaly stage -> Action.

One pass per tick; actions decided at tick t reach the plant at t + 1.
Internal-loop actions (monitoring level, model swap, reservation) change the
loop's own state between ticks.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..anomaly import AnomalyConfig, ClusterModel, Window, categorize, detect, score_window, summarize_window
from ..kb import FeedbackEntry, KnowledgeBase, PolicySet
from .config import EnvConfig, LoopConfig, ScenarioScript
from .control import DeployedModel, UEView, decide_action, predict_step, slice_order
from .env import HD, SD, env_init, env_step, monitor_collect
from .sla import PenaltyLedger


def with_script_overrides(loop: LoopConfig, script: ScenarioScript | None) -> LoopConfig:
    """Apply a script's loop overrides (e.g. a shorter anomaly window)."""
    if script is None or not script.loop:
        return loop
    over = dict(script.loop)
    if "anomaly" in over:
        over["anomaly"] = dataclasses.replace(loop.anomaly, **over["anomaly"])
    return dataclasses.replace(loop, **over)


@dataclass
class RunResult:
    ledger: PenaltyLedger
    events: list[dict] = field(default_factory=list)
    feedback: list[FeedbackEntry] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    windows: list[dict] = field(default_factory=list)
    final_model: str | None = None

    @property
    def detections(self) -> list[dict]:
        return [w for w in self.windows if w["detected"]]

    def actions(self, kind: str) -> list[dict]:
        return [e for e in self.events if e.get("kind") == kind]


def _priority_monotone(state, specs, order) -> bool:
    tiers = {s: set() for s in specs}
    for u in state.ues:
        tiers[u.slice_id].add(u.tier)
    for i, hi in enumerate(order):
        if SD in tiers[hi] and any(HD in tiers[lo] for lo in order[i + 1 :] if specs[lo].priority > specs[hi].priority):
            return False
    return True


def run_loop(
    env_cfg: EnvConfig,
    loop_cfg: LoopConfig,
    script: ScenarioScript | None = None,
    ticks: int | None = None,
    seed: int = 0,
    models: dict[str, DeployedModel] | None = None,
    model_id: str | None = None,
    kb: KnowledgeBase | None = None,
    cluster: ClusterModel | None = None,
    policies: PolicySet | None = None,
) -> RunResult:
    """Run the control scheme for ``ticks`` ticks (default: the script's length).

    The reactive controller allocates from the last CQI reports with no
    reserve and no prediction. The proactive controller predicts CQI from
    current measurements, keeps a reserve for the top slice, scores windows
    for anomalies and reacts to them.
    """
    loop_cfg = with_script_overrides(loop_cfg, script)
    ticks = script.ticks if ticks is None and script is not None else (ticks or 0)
    policies = policies or (kb.policies if kb is not None else None)
    restrictions = policies.handover_restrictions if policies is not None else ()
    specs = env_cfg.specs
    order = slice_order(specs, policies)
    models = models or {}
    proactive = loop_cfg.controller == "proactive"
    current = model_id if proactive else None
    if current is not None and current not in models:
        raise KeyError(f"model {current!r} is not deployed")
    level = loop_cfg.monitoring_level
    reserve = loop_cfg.reserve_margin_prbs if proactive else 0
    acfg: AnomalyConfig = loop_cfg.anomaly
    state = env_init(env_cfg, seed)
    result = RunResult(PenaltyLedger(), final_model=current)
    pending: list = []
    history: list[Window] = []
    win_records, win_preds = [], []
    win_start = 0
    for t in range(ticks):
        state = env_step(state, pending, t, env_cfg, script, restrictions)
        for r in state.rejected:
            result.events.append({"kind": "rejected", **r})
        if script is not None:
            for ev in script.at(t):
                result.events.append({"kind": "script", "tick": t, "event": ev.kind, **ev.params})

        # SLA audit on what the plant delivered this tick
        violated = {}
        for sid in specs:
            members = [u for u in state.ues if u.slice_id == sid]
            if not members:
                continue
            bad = any(state.throughput[u.id] < specs[sid].min_throughput_bps for u in members)
            result.ledger.record(specs[sid], bad)
            violated[sid] = bad

        records = monitor_collect(state, level, env_cfg)
        result.ledger.monitoring_cost += loop_cfg.cost(level) * len(records)
        pred = predict_step(models[current], records) if current is not None else None
        unavailable = pred is not None and not pred.available
        use_pred = pred is not None and pred.available and loop_cfg.placement == "predict"
        observed = {r.ue_id: r.metrics for r in records}
        views = []
        for u in state.ues:
            est = max(u.reported_cqi, 1)
            if use_pred:
                # conservative fusion: a fresh report may only lower the model's estimate
                fresh = observed[u.id].get("cqi_age", 1) == 0
                est = max(pred.cqi[u.id] - loop_cfg.cqi_backoff, 1)
                if fresh and loop_cfg.fuse_reports:
                    est = min(est, max(int(observed[u.id]["wb_cqi"]), 1))
            views.append(UEView(u.id, u.serving, u.slice_id, u.tier, u.demand_bps, est))

        # anomaly stage over non-overlapping windows
        anomaly_class = None
        if pred is not None:
            win_records.extend(records)
            fresh = {r.ue_id for r in records if r.metrics.get("cqi_age", 1) == 0}
            win_preds.extend(pred.raw.get(r.ue_id) if r.ue_id in fresh else None for r in records)
        if (t + 1 - win_start) >= acfg.window_ticks:
            if win_records and any(p is not None for p in win_preds):
                w = summarize_window(win_records, win_preds, win_start, t + 1)
                score = score_window(history, w, acfg)
                hit = detect(score)
                entry = {"start": win_start, "end": t + 1, "score": None if score is None else score.value, "detected": hit, "summary": list(w.summary)}
                if hit:
                    if cluster is not None and cluster.labels is not None:
                        anomaly_class = categorize(cluster, w)
                        entry["class"] = anomaly_class.name
                    result.events.append({"kind": "detection", "tick": t, **{k: v for k, v in entry.items() if k != "summary"}})
                if not hit or acfg.keep_detected:
                    history.append(w)
                    if acfg.history_limit:
                        history = history[-acfg.history_limit :]
                result.windows.append(entry)
            win_records, win_preds, win_start = [], [], t + 1

        actions = decide_action(
            views,
            env_cfg,
            specs,
            t,
            reserve_prbs=reserve,
            surge_reserve_prbs=loop_cfg.surge_reserve_prbs if proactive else 0,
            anomaly_class=anomaly_class,
            current_model_id=current,
            predict_unavailable=unavailable,
            policies=policies,
            ledger=result.ledger,
            background=state.background_prbs,
            shutdown=state.shutdown,
        )
        for a in actions:
            if a.kind == "set_monitoring_level":
                level = a.payload["level"]
            elif a.kind == "swap_model" and a.payload["model_id"] in models:
                current = a.payload["model_id"]
                history = []  # residuals of the old model say nothing about the new one
            elif a.kind == "reserve_resources":
                reserve = a.payload["prbs"]
            result.events.append(a.to_dict())
        pending = actions

        if pred is not None and pred.available:
            note = next((a.id for a in actions if a.kind not in ("reallocate_prbs", "noop")), None)
            obs = {r.ue_id: r.metrics["wb_cqi"] for r in records}
            result.feedback.extend(FeedbackEntry(t, pred.raw[u], obs[u], note, u) for u in sorted(pred.raw))

        result.trace.append(
            {
                "tick": t,
                "used_prbs": {g.id: state.used_prbs(g.id) for g in env_cfg.gnbs},
                "total_prbs": {g.id: g.total_prbs for g in env_cfg.gnbs},
                "violated": violated,
                "ue_count": {sid: sum(1 for u in state.ues if u.slice_id == sid) for sid in specs},
                "monotone": _priority_monotone(state, specs, order),
                "level": level,
                "model": current,
            }
        )
    result.final_model = current
    if kb is not None:
        kb.append_feedback(result.feedback)
    return result
