"""The simulated plant: UE mobility, serving-cell choice, inter-cell
interference, CQI reporting and PRB-driven throughput."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..ingest import MonitoringRecord, radio_metrics
from .config import FIELD_SETS, EnvConfig, ScenarioScript

HD, SD, FIXED = "HD", "SD", "-"


@dataclass
class UEState:
    id: str
    slice_id: str
    position: np.ndarray
    velocity: np.ndarray
    serving: str
    tier: str
    demand_bps: float
    report_phase: int
    reported_cqi: int = 0
    cqi_age: int = 0


@dataclass
class ActionEvent:
    tick: int
    kind: str
    payload: dict = field(default_factory=dict)
    seq: int = 0

    KINDS = (
        "reallocate_prbs",
        "degrade_to_sd",
        "restore_hd",
        "swap_model",
        "set_monitoring_level",
        "reserve_resources",
        "noop",
        "advisory",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")

    @property
    def id(self) -> str:
        return f"{self.tick}:{self.seq}:{self.kind}"

    def to_dict(self) -> dict:
        return {"id": self.id, "tick": self.tick, "kind": self.kind, "payload": self.payload}


@dataclass
class EnvState:
    """Plant state after a tick.

    ``allocations`` maps gnb -> slice -> {"ues": {ue: prbs}, "reserve": prbs};
    reserve PRBs are shared equally by the slice's UEs on that gNB.
    """

    tick: int
    ues: list[UEState]
    rng: np.random.Generator
    allocations: dict = field(default_factory=dict)
    background_prbs: dict = field(default_factory=dict)
    shutdown: set = field(default_factory=set)
    true_cqi: dict = field(default_factory=dict)
    throughput: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    rejected: list = field(default_factory=list)
    next_ue: int = 0

    def ue(self, ue_id: str) -> UEState:
        for u in self.ues:
            if u.id == ue_id:
                return u
        raise KeyError(ue_id)

    def used_prbs(self, gnb_id: str) -> float:
        total = float(self.background_prbs.get(gnb_id, 0))
        for alloc in self.allocations.get(gnb_id, {}).values():
            total += sum(alloc.get("ues", {}).values()) + alloc.get("reserve", 0)
        return total

    def slice_prbs(self, gnb_id: str, slice_id: str) -> float:
        a = self.allocations.get(gnb_id, {}).get(slice_id, {})
        return float(sum(a.get("ues", {}).values()) + a.get("reserve", 0))


def _tier_demand(cfg: EnvConfig, video: bool, tier: str, fixed: float) -> float:
    if not video:
        return fixed
    return cfg.hd_bps if tier == HD else cfg.sd_bps


def _spawn(state: EnvState, cfg: EnvConfig, slice_id: str, count: int, center, radius, speed) -> None:
    spec = next(s for s in cfg.slices if s.slice_id == slice_id)
    rng = state.rng
    for _ in range(count):
        r = radius * np.sqrt(rng.uniform())
        a = rng.uniform(0.0, 2 * np.pi)
        pos = np.asarray(center, dtype=float) + r * np.array([np.cos(a), np.sin(a)])
        h = rng.uniform(0.0, 2 * np.pi)
        vel = speed * np.array([np.cos(h), np.sin(h)])
        tier = HD if spec.video else FIXED
        idx = state.next_ue
        state.next_ue += 1
        state.ues.append(
            UEState(
                f"ue-{idx:03d}",
                slice_id,
                pos,
                vel,
                _nearest_gnb(cfg, pos),
                tier,
                _tier_demand(cfg, spec.video, tier, spec.demand_bps),
                idx % cfg.cqi_report_period,
                reported_cqi=0,
                cqi_age=-1,  # attaches with a fresh report on its first tick
            )
        )


def _distances(cfg: EnvConfig, pos: np.ndarray) -> np.ndarray:
    g = np.array([gn.position for gn in cfg.gnbs])
    return np.linalg.norm(g - pos, axis=1)


def _nearest_gnb(cfg: EnvConfig, pos) -> str:
    return cfg.gnbs[int(np.argmin(_distances(cfg, np.asarray(pos))))].id


def env_init(cfg: EnvConfig, seed: int) -> EnvState:
    state = EnvState(-1, [], np.random.default_rng(seed))
    for s in cfg.slices:
        _spawn(state, cfg, s.slice_id, s.ue_count, s.area_center, s.area_radius_m, s.speed_mps)
    return state


def _apply_script(state: EnvState, cfg: EnvConfig, script: ScenarioScript, tick: int) -> None:
    for ev in script.at(tick):
        p = ev.params
        if ev.kind == "mie_surge":
            sid = p.get("slice", "ehealth")
            present = sum(1 for u in state.ues if u.slice_id == sid)
            extra = int(round(present * (float(p.get("factor", 5)) - 1)))
            spec = next(s for s in cfg.slices if s.slice_id == sid)
            center = p.get("position", spec.area_center)
            _spawn(state, cfg, sid, extra, center, float(p.get("radius", 30.0)), float(p.get("speed", spec.speed_mps)))
        elif ev.kind == "route_shift":
            sid = p.get("slice", "embb")
            speed = float(p.get("speed", 15.0))
            heading = float(p.get("heading_deg", 0.0)) * np.pi / 180.0
            for u in state.ues:
                if u.slice_id == sid:
                    u.velocity = speed * np.array([np.cos(heading), np.sin(heading)])
        elif ev.kind == "demand_drop":
            # the slice's UEs stop streaming and fall back to a small fixed rate
            sid = p.get("slice", "embb")
            factor = float(p.get("factor", 0.1))
            for u in state.ues:
                if u.slice_id == sid:
                    u.tier = FIXED
                    u.demand_bps = u.demand_bps * factor
        elif ev.kind == "background_load":
            gnb = p["gnb"]
            state.background_prbs[gnb] = int(p.get("prbs", 0))
            _preempt(state, cfg, gnb)
        elif ev.kind == "shutdown_slice":
            state.shutdown.add(p["slice"])


def _preempt(state: EnvState, cfg: EnvConfig, gnb: str) -> None:
    """Shrink a cell's plan to fit lost capacity, taking PRBs from the lowest
    priority slice first (its reserve, then its UEs in reverse id order)."""
    excess = state.used_prbs(gnb) - cfg.gnb(gnb).total_prbs
    cell = state.allocations.get(gnb, {})
    specs = cfg.specs
    for sid in sorted(cell, key=lambda s: (-specs[s].priority, s) if s in specs else (0, s)):
        if excess <= 0:
            break
        alloc = cell[sid]
        take = min(alloc.get("reserve", 0), excess)
        alloc["reserve"] = alloc.get("reserve", 0) - take
        excess -= take
        for uid in sorted(alloc.get("ues", {}), reverse=True):
            if excess <= 0:
                break
            take = min(alloc["ues"][uid], excess)
            alloc["ues"][uid] -= take
            excess -= take


def _budget_ok(state: EnvState, cfg: EnvConfig, allocations: dict) -> str | None:
    for g in cfg.gnbs:
        used = float(state.background_prbs.get(g.id, 0))
        for alloc in allocations.get(g.id, {}).values():
            ues = alloc.get("ues", {})
            if any(v < 0 for v in ues.values()) or alloc.get("reserve", 0) < 0:
                return f"negative PRB count on {g.id}"
            used += sum(ues.values()) + alloc.get("reserve", 0)
        if used > g.total_prbs:
            return f"{g.id} over budget: {used:g} > {g.total_prbs}"
    return None


def _apply_actions(state: EnvState, cfg: EnvConfig, actions) -> None:
    for a in actions:
        if a.kind == "reallocate_prbs":
            why = _budget_ok(state, cfg, a.payload["allocations"])
            if why is not None:
                state.rejected.append({"tick": state.tick + 1, "action": a.id, "reason": why})
                continue
            state.allocations = copy.deepcopy(a.payload["allocations"])
        elif a.kind in ("degrade_to_sd", "restore_hd"):
            tier = SD if a.kind == "degrade_to_sd" else HD
            ids = set(a.payload.get("ues", []))
            for u in state.ues:
                if u.id in ids and u.tier != FIXED:
                    u.tier = tier
                    u.demand_bps = cfg.hd_bps if tier == HD else cfg.sd_bps


def _move(state: EnvState, cfg: EnvConfig) -> None:
    dt = cfg.tick_ms / 1000.0
    xmin, ymin, xmax, ymax = cfg.region
    for u in state.ues:
        p = u.position + u.velocity * dt
        for k, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
            if p[k] < lo or p[k] > hi:
                u.velocity[k] = -u.velocity[k]
                p[k] = min(max(p[k], lo), hi)
        u.position = p


def _handover(state: EnvState, cfg: EnvConfig, restrictions) -> None:
    ids = [g.id for g in cfg.gnbs]
    forbidden = {tuple(p) for p in restrictions} | {(b, a) for a, b in restrictions}
    ch = cfg.channel
    for u in state.ues:
        rx = ch.rx_power(_distances(cfg, u.position))
        cur = ids.index(u.serving)
        best = int(np.argmax(rx))
        if best != cur and rx[best] - rx[cur] >= cfg.handover_hysteresis_db and (u.serving, ids[best]) not in forbidden:
            u.serving = ids[best]


def _radio(state: EnvState, cfg: EnvConfig) -> None:
    """Per-UE metrics with interference from neighbour cells scaled by their PRB load."""
    if not state.ues:
        state.metrics = {}
        return
    ch = cfg.channel
    ids = [g.id for g in cfg.gnbs]
    util = np.array([min(state.used_prbs(g.id) / g.total_prbs, 1.0) if g.total_prbs else 0.0 for g in cfg.gnbs])
    dist = np.array([_distances(cfg, u.position) for u in state.ues])  # (ues, gnbs)
    serving = np.array([ids.index(u.serving) for u in state.ues])
    rx_mw = 10.0 ** (ch.rx_power(dist) / 10.0)
    mask = np.ones_like(rx_mw)
    mask[np.arange(len(serving)), serving] = 0.0
    interference = (rx_mw * mask * util).sum(axis=1)
    d_serv = dist[np.arange(len(serving)), serving]
    m = radio_metrics(ch, d_serv, interference, cfg.noise_sigma_db, state.rng)
    state.metrics = {u.id: {k: float(v[i]) for k, v in m.items()} for i, u in enumerate(state.ues)}


def _throughput(state: EnvState, cfg: EnvConfig) -> None:
    state.throughput = {}
    for u in state.ues:
        if u.slice_id in state.shutdown:
            state.throughput[u.id] = 0.0
            continue
        alloc = state.allocations.get(u.serving, {}).get(u.slice_id, {})
        prbs = float(alloc.get("ues", {}).get(u.id, 0))
        reserve = float(alloc.get("reserve", 0))
        if reserve:
            sharers = sum(1 for v in state.ues if v.serving == u.serving and v.slice_id == u.slice_id)
            prbs += reserve / sharers
        g = cfg.gnb(u.serving)
        state.throughput[u.id] = prbs * g.prb_bandwidth_hz * cfg.efficiency(state.true_cqi[u.id])


def env_step(
    state: EnvState,
    actions,
    tick: int,
    cfg: EnvConfig,
    script: ScenarioScript | None = None,
    restrictions=(),
) -> EnvState:
    """Advance the plant to ``tick``: script events, actions, motion, radio, throughput.

    Allocation changes that break a gNB's PRB budget are rejected and logged;
    the state advances without them.
    """
    s = copy.deepcopy(state)
    s.rejected = []
    if script is not None:
        _apply_script(s, cfg, script, tick)
    _apply_actions(s, cfg, actions)
    s.tick = tick
    _move(s, cfg)
    _handover(s, cfg, restrictions)
    _radio(s, cfg)
    s.true_cqi = {uid: int(m["wb_cqi"]) for uid, m in s.metrics.items()}
    for u in s.ues:
        if u.cqi_age < 0 or (tick - u.report_phase) % cfg.cqi_report_period == 0:
            u.reported_cqi = s.true_cqi[u.id]
            u.cqi_age = 0
        else:
            u.cqi_age += 1
    _throughput(s, cfg)
    return s


def monitor_collect(state: EnvState, level: str, cfg: EnvConfig) -> list[MonitoringRecord]:
    """One record per UE holding exactly the level's field set.

    At coarse level wb_cqi is the UE's latest periodic CQI report,
    ``cqi_age`` ticks old; fine level asks for a CQI report every tick.
    """
    fields = FIELD_SETS[level]
    fresh = level == "fine"
    out = []
    ts = state.tick * cfg.tick_ms
    for u in state.ues:
        m = state.metrics[u.id]
        values = dict(m)
        values["wb_cqi"] = float(state.true_cqi[u.id] if fresh else u.reported_cqi)
        values["cqi_age"] = 0.0 if fresh else float(u.cqi_age)
        values["demand_bps"] = float(u.demand_bps)
        out.append(MonitoringRecord(ts, u.id, u.serving, {k: values[k] for k in sorted(fields)}))
    return out
