"""Monitoring records, JSON-lines parsing and the seeded trace generator.

The generator stands in for recorded RAN traces: a UE moves around one gNB
according to a mobility scenario, link metrics follow a log-distance channel,
and wb_cqi is the quantized SINR. Corruption can be injected into the
observed wb_cqi while a ground-truth copy is kept for checking repairs.
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .table import STRING_COLUMNS, DataTable

REQUIRED_KEYS = ("timestamp_ms", "ue_id", "gnb_id")
CORE_METRICS = ("rsrp", "rsrq", "phr", "wb_cqi", "mcs1_dl")
SCENARIO_NAMES = ("static", "pedestrian", "circular_drive", "drive_away", "random_waypoint")
CQI_MIN, CQI_MAX = 1, 15
MCS_MAX = 28


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass
class MonitoringRecord:
    timestamp_ms: int
    ue_id: str | None
    gnb_id: str | None
    metrics: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d: dict = {"timestamp_ms": self.timestamp_ms}
        if self.ue_id is not None:
            d["ue_id"] = self.ue_id
        if self.gnb_id is not None:
            d["gnb_id"] = self.gnb_id
        d.update(self.metrics)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> MonitoringRecord:
        metrics = {k: v for k, v in d.items() if k not in REQUIRED_KEYS}
        return cls(int(d["timestamp_ms"]), d.get("ue_id"), d.get("gnb_id"), metrics)


def round_half_away(x):
    """Round to nearest integer, halves away from zero (numpy rounds halves to even)."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


# -- parsing -------------------------------------------------------------


def _flatten(obj: dict) -> dict:
    # nested {"metrics": {...}} objects are accepted alongside flat ones
    out = {k: v for k, v in obj.items() if k != "metrics"}
    nested = obj.get("metrics")
    if isinstance(nested, dict):
        out.update(nested)
    return out


def parse_records(stream: str | Iterable[str]) -> DataTable:
    """Parse JSON-lines monitoring samples into a table, one row per line.

    Columns are the sorted union of keys; absent numeric values become NaN.
    """
    lines = stream.splitlines() if isinstance(stream, str) else stream
    rows: list[dict] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ParseError(lineno, "expected a JSON object")
        obj = _flatten(obj)
        for key in REQUIRED_KEYS:
            if key not in obj:
                raise ParseError(lineno, f"missing required key {key!r}")
        for key, value in obj.items():
            if key in STRING_COLUMNS:
                if not isinstance(value, str):
                    raise ParseError(lineno, f"{key!r} must be a string")
            elif value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise TypeError(f"line {lineno}: metric {key!r} is not numeric: {value!r}")
        rows.append(obj)
    names = sorted({k for r in rows for k in r})
    cols: dict[str, list] = {}
    for name in names:
        if name in STRING_COLUMNS:
            cols[name] = [r.get(name, "") for r in rows]
        else:
            cols[name] = [math.nan if r.get(name) is None else float(r[name]) for r in rows]
    return DataTable({n: np.array(v, dtype=object if n in STRING_COLUMNS else float) for n, v in cols.items()})


def serialize_records(table: DataTable) -> str:
    """Inverse of :func:`parse_records` for well-formed tables."""
    out = []
    cols = [(n, table[n], table.is_numeric(n)) for n in table.names]
    for i in range(table.row_count):
        obj = {}
        for name, col, numeric in cols:
            v = col[i]
            if not numeric:
                obj[name] = v
            elif math.isnan(v):
                obj[name] = None
            elif name == "timestamp_ms" and float(v).is_integer():
                obj[name] = int(v)
            else:
                obj[name] = float(v)
        out.append(json.dumps(obj, sort_keys=True))
    return "".join(line + "\n" for line in out)


def records_to_table(records: list[MonitoringRecord]) -> DataTable:
    return parse_records(json.dumps(r.to_dict()) for r in records)


# -- channel model -------------------------------------------------------


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss with a SINR proxy quantized into 15 CQI bins."""

    tx_power_dbm: float = 23.0
    ref_loss_db: float = 30.0
    exponent: float = 3.5
    noise_floor_dbm: float = -95.0
    sinr_lo_db: float = -5.0
    sinr_hi_db: float = 25.0
    ue_pmax_dbm: float = 23.0
    p0_dbm: float = -90.0
    pl_alpha: float = 0.8
    ta_step_m: float = 4.89

    def path_loss(self, distance_m):
        d = np.maximum(np.asarray(distance_m, dtype=float), 1.0)
        return self.ref_loss_db + 10.0 * self.exponent * np.log10(d)

    def rx_power(self, distance_m):
        return self.tx_power_dbm - self.path_loss(distance_m)

    def sinr(self, distance_m, interference_mw=0.0):
        noise_mw = 10.0 ** (self.noise_floor_dbm / 10.0)
        s_mw = 10.0 ** (self.rx_power(distance_m) / 10.0)
        return 10.0 * np.log10(s_mw / (noise_mw + np.asarray(interference_mw, dtype=float)))

    def bin_width(self) -> float:
        return (self.sinr_hi_db - self.sinr_lo_db) / CQI_MAX

    def cqi(self, sinr_db):
        level = np.floor((np.asarray(sinr_db, dtype=float) - self.sinr_lo_db) / self.bin_width()) + 1
        return np.clip(level, CQI_MIN, CQI_MAX)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def mcs_from_cqi(cqi):
    return np.clip(round_half_away(1.85 * np.asarray(cqi, dtype=float)), 0, MCS_MAX)


def radio_metrics(channel: ChannelModel, distance_m, interference_mw, noise_sigma_db: float, rng) -> dict:
    """Measured link metrics for arrays of UE distances.

    wb_cqi and mcs1_dl are noise-free; the reported rsrp/rsrq/phr carry
    Gaussian measurement noise.
    """
    d = np.asarray(distance_m, dtype=float)
    n = d.shape
    pl = channel.path_loss(d)
    sinr = channel.sinr(d, interference_mw)
    cqi = channel.cqi(sinr)
    lin = 10.0 ** (sinr / 10.0)

    def noise(scale=1.0):
        return rng.normal(0.0, noise_sigma_db * scale, n) if noise_sigma_db > 0 else np.zeros(n)

    rsrp = np.minimum(channel.tx_power_dbm - pl + noise(), 0.0)
    rsrq = np.minimum(10.0 * np.log10(lin / (12.0 * (lin + 1.0))) + noise(0.5), 0.0)
    phr = np.clip(channel.ue_pmax_dbm - (channel.p0_dbm + channel.pl_alpha * pl) + noise(), -23.0, 40.0)
    ta = np.maximum(np.round(d / channel.ta_step_m + noise(0.2)), 0.0)
    bin_lo = channel.sinr_lo_db + (cqi - 1) * channel.bin_width()
    bler = np.clip(0.1 * np.exp(-(sinr - bin_lo) / 1.5) + 0.01 * noise(), 0.0, 1.0)
    return {
        "sinr_db": sinr,
        "wb_cqi": cqi,
        "mcs1_dl": mcs_from_cqi(cqi),
        "rsrp": rsrp,
        "rsrq": rsrq,
        "phr": phr,
        "timing_advance": ta,
        "dl_bler": bler,
    }


# -- generator -----------------------------------------------------------


@dataclass
class TraceScenario:
    name: str
    duration_ms: int = 60_000
    sample_period_ms: int = 10
    gnb_position: tuple[float, float] = (0.0, 0.0)
    speed_mps: float = 0.0
    start_distance_m: float = 80.0
    span_m: float = 80.0
    interference_dbm: float | None = None

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.duration_ms <= 0 or self.sample_period_ms <= 0:
            raise ValueError("duration and sample period must be positive")
        self.gnb_position = tuple(self.gnb_position)

    @property
    def samples(self) -> int:
        return self.duration_ms // self.sample_period_ms


@dataclass
class CorruptionSpec:
    spike_value: int = 3
    spike_probability: float = 0.0
    max_run_length: int = 3

    def __post_init__(self):
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError("spike_probability must lie in [0, 1]")
        if self.max_run_length < 1:
            raise ValueError("max_run_length must be >= 1")


@dataclass
class GeneratorConfig:
    seed: int = 0
    scenarios: list[TraceScenario] = field(default_factory=lambda: default_scenarios())
    noise_sigma_db: float = 1.0
    static_field_count: int = 5
    extra_counters: int = 12
    corruption: CorruptionSpec = field(default_factory=CorruptionSpec)
    channel: ChannelModel = field(default_factory=ChannelModel)
    epoch_ms: int = 1_560_000_000_000

    def __post_init__(self):
        if self.noise_sigma_db < 0 or self.static_field_count < 0 or self.extra_counters < 0:
            raise ValueError("noise sigma and field counts must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorConfig:
        d = dict(d)
        if "scenarios" in d:
            d["scenarios"] = [TraceScenario(**s) for s in d["scenarios"]]
        if "corruption" in d:
            d["corruption"] = CorruptionSpec(**d["corruption"])
        if "channel" in d:
            d["channel"] = ChannelModel(**d["channel"])
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_scenarios(samples: int = 6000, sample_period_ms: int = 10) -> list[TraceScenario]:
    """The five mobility patterns, sized to keep wb_cqi roughly in 7..15."""
    dur = samples * sample_period_ms
    mk = lambda name, **kw: TraceScenario(name, duration_ms=dur, sample_period_ms=sample_period_ms, **kw)
    return [
        mk("static", start_distance_m=100.0),
        mk("pedestrian", speed_mps=1.4, start_distance_m=70.0, span_m=60.0),
        mk("circular_drive", speed_mps=5.0, start_distance_m=70.0, span_m=80.0),
        mk("drive_away", speed_mps=2.0, start_distance_m=60.0),
        mk("random_waypoint", speed_mps=3.0, start_distance_m=70.0, span_m=100.0),
    ]


def trajectory(sc: TraceScenario, rng: np.random.Generator) -> np.ndarray:
    """UE positions (n x 2, metres, gNB-relative) at each sample."""
    n = sc.samples
    t = np.arange(n) * (sc.sample_period_ms / 1000.0)
    travelled = sc.speed_mps * t
    d0 = sc.start_distance_m
    if sc.name == "static" or sc.speed_mps == 0:
        return np.tile([d0, 0.0], (n, 1))
    if sc.name == "pedestrian":
        span = max(sc.span_m, 1e-9)
        phase = np.mod(travelled, 2 * span)
        r = d0 + np.where(phase <= span, phase, 2 * span - phase)
        return np.column_stack([r, np.zeros(n)])
    if sc.name == "circular_drive":
        radius = sc.span_m / 2.0
        theta = travelled / radius
        cx = d0 + radius
        return np.column_stack([cx - radius * np.cos(theta), radius * np.sin(theta)])
    if sc.name == "drive_away":
        return np.column_stack([d0 + travelled, np.zeros(n)])
    # random_waypoint: straight legs between waypoints drawn in an annulus
    step = sc.speed_mps * sc.sample_period_ms / 1000.0
    pos = np.empty((n, 2))
    cur = np.array([d0, 0.0])
    target = cur
    for i in range(n):
        while np.linalg.norm(target - cur) < 1e-9:
            r = d0 + rng.uniform(0.0, sc.span_m)
            a = rng.uniform(0.0, 2 * np.pi)
            target = np.array([r * np.cos(a), r * np.sin(a)])
        pos[i] = cur
        gap = target - cur
        dist = np.linalg.norm(gap)
        cur = target.copy() if dist <= step else cur + gap * (step / dist)
    return pos


def generate_trace(cfg: GeneratorConfig) -> tuple[DataTable, DataTable]:
    """Return (observed, ground_truth) tables for every configured scenario.

    The ground-truth table carries the uncorrupted wb_cqi and a 0/1
    ``corrupted`` column marking the rows the corruption pass overwrote.
    """
    seq = np.random.SeedSequence(cfg.seed)
    scen_seqs = seq.spawn(len(cfg.scenarios) + 1)
    observed, truth = [], []
    for idx, (sc, ss) in enumerate(zip(cfg.scenarios, scen_seqs)):
        rng = np.random.default_rng(ss)
        pos = trajectory(sc, rng)
        n = len(pos)
        dist = np.linalg.norm(pos, axis=1)
        interference = 0.0 if sc.interference_dbm is None else 10.0 ** (sc.interference_dbm / 10.0)
        m = radio_metrics(cfg.channel, dist, interference, cfg.noise_sigma_db, rng)
        ts = cfg.epoch_ms + np.arange(n) * sc.sample_period_ms
        ue = f"ue-{idx}"
        cols = {
            "timestamp_ms": ts,
            "ue_id": [ue] * n,
            "gnb_id": ["gnb-0"] * n,
            "scenario": [sc.name] * n,
        }
        for name in ("rsrp", "rsrq", "phr", "wb_cqi", "mcs1_dl", "timing_advance", "dl_bler"):
            cols[name] = m[name]
        for j in range(cfg.extra_counters):
            cols[f"mac_ctr_{j:02d}"] = np.cumsum(rng.normal(0.0, 1.0, n))
        for j in range(cfg.static_field_count):
            cols[f"static_{j:02d}"] = np.full(n, float(j + 1))
        observed.append(DataTable(cols))
        truth.append(
            DataTable(
                {
                    "timestamp_ms": ts,
                    "ue_id": [ue] * n,
                    "scenario": [sc.name] * n,
                    "distance_m": dist,
                    "sinr_db": m["sinr_db"],
                    "wb_cqi": m["wb_cqi"],
                }
            )
        )
    obs = DataTable.concat(observed)
    gt = DataTable.concat(truth)
    obs, idx = inject_corruption(obs, cfg.corruption, scen_seqs[-1])
    mask = np.zeros(gt.row_count)
    mask[idx] = 1.0
    return obs, gt.with_column("corrupted", mask)


def corruption_indices(n: int, spec: CorruptionSpec, seed) -> list[int]:
    rng = np.random.default_rng(seed)
    out: list[int] = []
    i = 0
    while i < n:
        if spec.spike_probability > 0 and rng.random() < spec.spike_probability:
            run = int(rng.integers(1, spec.max_run_length + 1))
            out.extend(range(i, min(i + run, n)))
            i += run
        else:
            i += 1
    return out


def inject_corruption(table: DataTable, spec: CorruptionSpec, seed, column: str = "wb_cqi"):
    """Overwrite random short runs of ``column`` with the spike value.

    Returns the new table and the exact list of overwritten row indices.
    """
    if column not in table:
        raise KeyError(f"table has no {column!r} column")
    idx = corruption_indices(table.row_count, spec, seed)
    if not idx:
        return table, []
    values = table[column].copy()
    values[idx] = float(spec.spike_value)
    return table.with_column(column, values), idx
