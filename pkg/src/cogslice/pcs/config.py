"""Environment, SLA and loop configuration for the control-scheme simulator."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..anomaly import AnomalyConfig
from ..ingest import ChannelModel

# 4-bit CQI to spectral efficiency (bits/s/Hz), the usual 64QAM table
CQI_EFFICIENCY = (
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770,
    1.1758, 1.4766, 1.9141, 2.4063, 2.7305,
    3.3223, 3.9023, 4.5234, 5.1152, 5.5547,
)  # fmt: skip

COARSE_FIELDS = frozenset({"wb_cqi", "mcs1_dl", "timing_advance", "dl_bler", "demand_bps", "cqi_age"})
FINE_FIELDS = COARSE_FIELDS | {"rsrp", "rsrq", "phr"}
FIELD_SETS = {"coarse": COARSE_FIELDS, "fine": FINE_FIELDS}


@dataclass(frozen=True)
class GnbSpec:
    id: str
    position: tuple[float, float]
    total_prbs: int = 100
    prb_bandwidth_hz: float = 360e3

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if self.total_prbs < 0 or self.prb_bandwidth_hz <= 0:
            raise ValueError("gNB needs nonnegative PRBs and positive PRB bandwidth")


@dataclass(frozen=True)
class SlaSpec:
    slice_id: str
    min_throughput_bps: float = 2e6
    guarantee_quantile: float = 0.95
    penalty_per_violation_tick: float = 1.0
    priority: int = 0

    def __post_init__(self):
        if self.min_throughput_bps <= 0:
            raise ValueError("SLA throughput must be positive")
        if not 0.0 < self.guarantee_quantile <= 1.0:
            raise ValueError("guarantee quantile must lie in (0, 1]")


@dataclass(frozen=True)
class SliceSpec:
    """Population of one slice: UEs spawned in a disc and moving at ``speed_mps``."""

    sla: SlaSpec
    ue_count: int
    video: bool = True
    demand_bps: float = 0.0  # fixed per-UE demand for non-video slices
    speed_mps: float = 0.0
    area_center: tuple[float, float] = (0.0, 0.0)
    area_radius_m: float = 100.0

    @property
    def slice_id(self) -> str:
        return self.sla.slice_id


@dataclass
class EnvConfig:
    gnbs: list[GnbSpec] = field(default_factory=lambda: default_gnbs())
    slices: list[SliceSpec] = field(default_factory=lambda: default_slices())
    cqi_efficiency: tuple[float, ...] = CQI_EFFICIENCY
    channel: ChannelModel = field(default_factory=ChannelModel)
    noise_sigma_db: float = 1.0
    hd_bps: float = 8e6
    sd_bps: float = 2.5e6
    tick_ms: int = 100
    cqi_report_period: int = 10
    handover_hysteresis_db: float = 3.0
    region: tuple[float, float, float, float] = (-60.0, -60.0, 310.0, 280.0)  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        eff = tuple(float(v) for v in self.cqi_efficiency)
        if len(eff) != 15 or any(b <= a for a, b in zip(eff, eff[1:])):
            raise ValueError("CQI efficiency table needs 15 strictly increasing entries")
        self.cqi_efficiency = eff
        ids = [s.slice_id for s in self.slices]
        if len(set(ids)) != len(ids):
            raise ValueError("slice ids must be unique")

    @property
    def specs(self) -> dict[str, SlaSpec]:
        return {s.slice_id: s.sla for s in self.slices}

    def gnb(self, gnb_id: str) -> GnbSpec:
        for g in self.gnbs:
            if g.id == gnb_id:
                return g
        raise KeyError(gnb_id)

    def efficiency(self, cqi) -> float:
        return self.cqi_efficiency[int(cqi) - 1]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> EnvConfig:
        d = dict(d)
        if "gnbs" in d:
            d["gnbs"] = [GnbSpec(**g) for g in d["gnbs"]]
        if "slices" in d:
            d["slices"] = [SliceSpec(**{**s, "sla": SlaSpec(**s["sla"])}) for s in d["slices"]]
        if "channel" in d:
            d["channel"] = ChannelModel(**d["channel"])
        for key in ("cqi_efficiency", "region"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def default_gnbs() -> list[GnbSpec]:
    return [GnbSpec("gnb-0", (0.0, 0.0)), GnbSpec("gnb-1", (250.0, 0.0)), GnbSpec("gnb-2", (125.0, 216.5))]


def default_slices() -> list[SliceSpec]:
    return [
        SliceSpec(SlaSpec("ehealth", 2e6, 0.95, 10.0, 0), 2, True, speed_mps=12.0, area_center=(60.0, 40.0), area_radius_m=60.0),
        SliceSpec(SlaSpec("embb", 2e6, 0.95, 2.0, 1), 3, True, speed_mps=1.4, area_center=(125.0, 80.0), area_radius_m=140.0),
        SliceSpec(SlaSpec("iot", 1e5, 0.95, 0.5, 2), 9, False, demand_bps=2e5, area_center=(125.0, 80.0), area_radius_m=140.0),
    ]


@dataclass(frozen=True)
class LoopConfig:
    controller: str = "proactive"
    monitoring_level: str = "coarse"
    monitoring_cost: tuple[tuple[str, float], ...] = (("coarse", 1.0), ("fine", 3.0))
    reserve_margin_prbs: int = 4
    surge_reserve_prbs: int = 12
    cqi_backoff: int = 1  # CQI steps shaved off predictions before allocating
    fuse_reports: bool = True  # a fresh CQI report caps the predicted estimate
    placement: str = "predict"
    anomaly: AnomalyConfig = field(default_factory=AnomalyConfig)

    def __post_init__(self):
        if self.controller not in ("proactive", "reactive"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.monitoring_level not in FIELD_SETS:
            raise ValueError(f"unknown monitoring level {self.monitoring_level!r}")
        if self.placement not in ("predict", "monitor"):
            raise ValueError(f"unknown predictor placement {self.placement!r}")
        if self.reserve_margin_prbs < 0 or self.surge_reserve_prbs < 0 or self.cqi_backoff < 0:
            raise ValueError("reserve margins and CQI backoff must be nonnegative")

    def cost(self, level: str) -> float:
        return dict(self.monitoring_cost)[level]

    @classmethod
    def from_dict(cls, d: dict) -> LoopConfig:
        d = dict(d)
        if "anomaly" in d:
            d["anomaly"] = AnomalyConfig(**d["anomaly"])
        if "monitoring_cost" in d:
            mc = d["monitoring_cost"]
            d["monitoring_cost"] = tuple(mc.items()) if isinstance(mc, dict) else tuple(tuple(p) for p in mc)
        return cls(**d)


# -- scenario scripts ---------------------------------------------------------

EVENT_KINDS = ("mie_surge", "route_shift", "demand_drop", "background_load", "shutdown_slice")


@dataclass(frozen=True)
class ScriptEvent:
    tick: int
    kind: str
    params: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown script event {self.kind!r}")
        if self.tick < 0:
            raise ValueError("event tick must be nonnegative")


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    events: tuple[ScriptEvent, ...] = ()
    ticks: int = 500
    loop: dict = field(default_factory=dict, hash=False)  # LoopConfig overrides for this script

    def at(self, tick: int) -> list[ScriptEvent]:
        return [e for e in self.events if e.tick == tick]

    def first(self, kind: str) -> ScriptEvent | None:
        return next((e for e in self.events if e.kind == kind), None)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ticks": self.ticks,
            "loop": self.loop,
            "events": [{"tick": e.tick, "kind": e.kind, **e.params} for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioScript:
        events = []
        for e in d.get("events", []):
            e = dict(e)
            events.append(ScriptEvent(int(e.pop("tick")), e.pop("kind"), e))
        return cls(d["name"], tuple(sorted(events, key=lambda e: e.tick)), int(d.get("ticks", 500)), dict(d.get("loop", {})))


BUNDLED_SCRIPTS = ("benign", "mie_surge", "route_shift", "demand_drop", "shortfall")


def load_script(name_or_path: str | Path) -> ScenarioScript:
    """A bundled script by name, or a JSON file path."""
    if str(name_or_path) in BUNDLED_SCRIPTS:
        text = resources.files("cogslice.pcs").joinpath("scenarios", f"{name_or_path}.json").read_text()
    else:
        text = Path(name_or_path).read_text()
    return ScenarioScript.from_dict(json.loads(text))
