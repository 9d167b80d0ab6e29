"""Cleaning passes applied to raw monitoring tables before feature work."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import CQI_MAX, CQI_MIN, round_half_away
from .table import DataTable

IDENTITY_COLUMNS = ("timestamp_ms", "dt_ms")


class OrderingError(ValueError):
    pass


class IrreparableColumnError(ValueError):
    pass


class RepairedCell(NamedTuple):
    row: int
    column: str
    old: float
    new: float
    method: str


@dataclass
class RepairReport:
    cells: list[RepairedCell] = field(default_factory=list)
    method: str = ""
    detector: str = ""

    @property
    def repaired_cells(self) -> list[tuple[int, str, float, float]]:
        return [(c.row, c.column, c.old, c.new) for c in self.cells]

    def rows(self) -> list[int]:
        return [c.row for c in self.cells]

    def to_dict(self) -> dict:
        def num(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "method": self.method,
            "detector": self.detector,
            "repaired_cells": [
                {"row": c.row, "column": c.column, "old": num(c.old), "new": num(c.new), "method": c.method}
                for c in self.cells
            ],
        }

    def merged(self, other: RepairReport) -> RepairReport:
        methods = sorted({m for m in (self.method, other.method) if m})
        return RepairReport(self.cells + other.cells, "+".join(methods), "; ".join(d for d in (self.detector, other.detector) if d))


def _groups(table: DataTable) -> list[np.ndarray]:
    """Row indices per UE in table order (one group when there is no ue_id)."""
    n = table.row_count
    if "ue_id" not in table:
        return [np.arange(n)]
    ue = table["ue_id"]
    order: dict[str, list[int]] = {}
    for i, u in enumerate(ue):
        order.setdefault(u, []).append(i)
    return [np.array(v) for v in order.values()]


def add_relative_timestamps(table: DataTable) -> DataTable:
    """Insert ``dt_ms``: time since the previous sample of the same UE (0 for the first)."""
    if "timestamp_ms" not in table:
        raise KeyError("table has no timestamp_ms column")
    ts = table["timestamp_ms"]
    dt = np.zeros(table.row_count)
    for rows in _groups(table):
        d = np.diff(ts[rows])
        if np.any(d < 0):
            bad = rows[1:][d < 0][0]
            raise OrderingError(f"timestamps decrease at row {bad}")
        dt[rows[1:]] = d
    return table.with_column("dt_ms", dt, after="timestamp_ms")


def prune_static_fields(table: DataTable, protect=IDENTITY_COLUMNS) -> tuple[DataTable, list[str]]:
    """Drop numeric columns whose non-missing values never change."""
    removed = []
    for name in table.numeric_names():
        if name in protect:
            continue
        col = table[name]
        present = col[~np.isnan(col)]
        if present.size == 0 or np.all(present == present[0]):
            removed.append(name)
    return table.drop(removed), removed


@dataclass
class DetectorConfig:
    valid_range: tuple[float, float] = (-math.inf, math.inf)
    neighbors: int = 4
    run_threshold: int = 5
    window_ms: float = 100.0
    window_rows: int = 10

    def describe(self) -> str:
        lo, hi = self.valid_range
        return f"range[{lo}, {hi}] or missing"


def _neighbor_median(values, ok, i, w):
    n = len(values)
    picked = []
    lo, hi = i - 1, i + 1
    while len(picked) < w and (lo >= 0 or hi < n):
        if lo >= 0:
            if ok[lo]:
                picked.append(values[lo])
            lo -= 1
        if len(picked) < w and hi < n:
            if ok[hi]:
                picked.append(values[hi])
            hi += 1
    return float(np.median(picked)) if picked else math.nan


def repair_values(table: DataTable, column: str, cfg: DetectorConfig | None = None) -> tuple[DataTable, RepairReport]:
    """Replace missing or out-of-range cells of one column.

    Short runs of flagged cells take the median of the ``neighbors`` nearest
    good cells; runs longer than ``run_threshold`` take the mean of good cells
    in the preceding ``window_ms`` (or ``window_rows`` without timestamps).
    """
    cfg = cfg or DetectorConfig()
    if not table.is_numeric(column):
        raise TypeError(f"column {column!r} is not numeric")
    values = table[column].copy()
    lo, hi = cfg.valid_range
    flagged = np.isnan(values) | (values < lo) | (values > hi)
    report = RepairReport(method="neighbor_median", detector=cfg.describe())
    if not flagged.any():
        return table, report
    ts = table["timestamp_ms"] if "timestamp_ms" in table else None
    new = values.copy()
    methods = set()
    for rows in _groups(table):
        v = values[rows]
        bad = flagged[rows]
        if bad.all():
            raise IrreparableColumnError(f"every cell of {column!r} is flagged for one UE")
        ok = ~bad
        i = 0
        while i < len(rows):
            if not bad[i]:
                i += 1
                continue
            j = i
            while j < len(rows) and bad[j]:
                j += 1
            run = range(i, j)
            fill = None
            if j - i > cfg.run_threshold:
                if ts is not None:
                    t0 = ts[rows[i]]
                    prev = np.arange(i)
                    prev = prev[(ts[rows[prev]] >= t0 - cfg.window_ms) & ok[prev]]
                else:
                    prev = np.arange(max(0, i - cfg.window_rows), i)
                    prev = prev[ok[prev]]
                if prev.size:
                    fill = float(np.mean(v[prev]))
                    for k in run:
                        new[rows[k]] = fill
                    methods.add("window_mean")
                    report.cells.extend(RepairedCell(int(rows[k]), column, float(v[k]), fill, "window_mean") for k in run)
            if fill is None:
                for k in run:
                    m = _neighbor_median(v, ok, k, cfg.neighbors)
                    new[rows[k]] = m
                    report.cells.append(RepairedCell(int(rows[k]), column, float(v[k]), m, "neighbor_median"))
                methods.add("neighbor_median")
            i = j
    report.cells.sort(key=lambda c: c.row)
    report.method = "+".join(sorted(methods))
    return table.with_column(column, new), report


@dataclass
class SpikeConfig:
    spike_delta: float = 4.0
    half_window: int = 50
    agree_within: float = 1.0
    lo: int = CQI_MIN
    hi: int = CQI_MAX


def _windowed_nanmedian(v: np.ndarray, before: int, after: int) -> np.ndarray:
    """Median of v[i-before : i+after+1] per i (truncated at the edges, NaN when empty)."""
    n = len(v)
    width = before + after + 1
    padded = np.concatenate([np.full(before, np.nan), v, np.full(after, np.nan)])
    win = sliding_window_view(padded, width)[:n]
    out = np.full(n, np.nan)
    has = ~np.all(np.isnan(win), axis=1)
    if has.any():
        out[has] = np.nanmedian(win[has], axis=1)
    return out


def _side_median(v: np.ndarray, k: int, side: str) -> np.ndarray:
    n = len(v)
    if side == "before":
        shifted = np.concatenate([[np.nan], v[:-1]]) if n else v
        return _windowed_nanmedian(shifted, k - 1, 0)
    shifted = np.concatenate([v[1:], [np.nan]]) if n else v
    return _windowed_nanmedian(shifted, 0, k - 1)


def detect_target_spikes(values: np.ndarray, cfg: SpikeConfig) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    k = cfg.half_window
    center = _windowed_nanmedian(v, k, k)
    before = _side_median(v, k, "before")
    after = _side_median(v, k, "after")
    # a missing side (trace edge) cannot disagree with the other one
    agree = np.where(
        np.isnan(before) | np.isnan(after), True, np.abs(before - after) <= cfg.agree_within
    )
    spike = (np.abs(v - center) >= cfg.spike_delta) & agree
    invalid = np.isnan(v) | (v < cfg.lo) | (v > cfg.hi) | (v != np.round(v))
    return spike | invalid


def repair_target_spikes(
    table: DataTable, target: str = "wb_cqi", cfg: SpikeConfig | None = None
) -> tuple[DataTable, RepairReport]:
    """Replace ephemeral drops in the target with the median of 50 clean rows either side."""
    cfg = cfg or SpikeConfig()
    values = table[target].copy()
    new = values.copy()
    report = RepairReport(method="target_spike_median", detector=f"|x - median{2 * cfg.half_window + 1}| >= {cfg.spike_delta}")
    for rows in _groups(table):
        v = values[rows]
        spike = detect_target_spikes(v, cfg)
        if not spike.any():
            continue
        clean = np.flatnonzero(~spike)
        if clean.size == 0:
            raise IrreparableColumnError(f"every {target!r} cell of one UE looks corrupt")
        for i in np.flatnonzero(spike):
            pos = np.searchsorted(clean, i)
            neigh = np.concatenate([clean[max(0, pos - cfg.half_window):pos], clean[pos:pos + cfg.half_window]])
            fill = float(np.clip(round_half_away(np.median(v[neigh])), cfg.lo, cfg.hi))
            if fill != v[i]:
                new[rows[i]] = fill
                report.cells.append(RepairedCell(int(rows[i]), target, float(v[i]), fill, "target_spike_median"))
    report.cells.sort(key=lambda c: c.row)
    return table.with_column(target, new), report


@dataclass
class NormalizationParams:
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        self.bounds = {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()}
        for name, (lo, hi) in self.bounds.items():
            if hi < lo:
                raise ValueError(f"max < min for column {name!r}")

    @property
    def degenerate(self) -> set[str]:
        return {n for n, (lo, hi) in self.bounds.items() if hi == lo}

    def to_dict(self) -> dict:
        return {n: [lo, hi] for n, (lo, hi) in self.bounds.items()}

    @classmethod
    def from_dict(cls, d: dict) -> NormalizationParams:
        return cls({n: tuple(b) for n, b in d.items()})

    def scale(self, name: str, x):
        lo, hi = self.bounds[name]
        x = np.asarray(x, dtype=float)
        if hi == lo:
            return np.where(np.isnan(x), np.nan, 0.0)
        return np.clip((x - lo) / (hi - lo), 0.0, 1.0)

    def unscale(self, name: str, u):
        lo, hi = self.bounds[name]
        return lo + np.asarray(u, dtype=float) * (hi - lo)


def normalize(
    table: DataTable, params: NormalizationParams | None = None, columns: list[str] | None = None
) -> tuple[DataTable, NormalizationParams]:
    """Min-max scale columns to [0, 1].

    With ``params`` the stored bounds are applied and results clamped, which
    is the validation/runtime path. Constant columns map to 0.
    """
    if params is None:
        cols = columns if columns is not None else table.numeric_names()
        bounds = {}
        for name in cols:
            col = table[name]
            if np.all(np.isnan(col)):
                bounds[name] = (0.0, 0.0)
            else:
                bounds[name] = (float(np.nanmin(col)), float(np.nanmax(col)))
        params = NormalizationParams(bounds)
    out = table
    for name in params.bounds:
        if name in table:
            out = out.with_column(name, params.scale(name, table[name]))
    return out, params


def denormalize(table: DataTable, params: NormalizationParams) -> DataTable:
    out = table
    for name in params.bounds:
        if name in table:
            out = out.with_column(name, params.unscale(name, table[name]))
    return out


@dataclass
class PreprocessConfig:
    target: str = "wb_cqi"
    spikes: SpikeConfig = field(default_factory=SpikeConfig)
    detectors: dict[str, DetectorConfig] = field(
        default_factory=lambda: {
            "rsrp": DetectorConfig(valid_range=(-156.0, 0.0)),
            "rsrq": DetectorConfig(valid_range=(-43.0, 20.0)),
            "phr": DetectorConfig(valid_range=(-23.0, 40.0)),
        }
    )
    repair_spikes: bool = True

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def preprocess(table: DataTable, cfg: PreprocessConfig | None = None) -> tuple[DataTable, list[str], RepairReport]:
    """Timestamps, static pruning, metric repair and (optionally) target-spike repair."""
    cfg = cfg or PreprocessConfig()
    t = add_relative_timestamps(table)
    t, removed = prune_static_fields(t)
    report = RepairReport()
    for column, det in cfg.detectors.items():
        if column in t:
            t, r = repair_values(t, column, det)
            report = report.merged(r)
    if cfg.target in t:
        t, r = repair_values(t, cfg.target, DetectorConfig(valid_range=(float(CQI_MIN), float(CQI_MAX))))
        report = report.merged(r)
        if cfg.repair_spikes:
            t, r = repair_target_spikes(t, cfg.target, cfg.spikes)
            report = report.merged(r)
    return t, removed, report
