"""Validation: scenario-based splitting, error metrics, worst-error tables,
model comparison and the two fallback gates of the workflow."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureSet, feature_availability_check
from .ingest import CQI_MAX, CQI_MIN, round_half_away
from .table import DataTable

ACCEPT = "accept"
FALLBACK_PHASE1 = "fallback_phase1"
FALLBACK_PHASE2 = "fallback_phase2"


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "scenario_based"
    train_fraction: float = 0.9
    holdout_scenarios: tuple[str, ...] = ()
    seed: int = 0
    folds: int = 10

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.mode not in ("scenario_based", "k_fold"):
            raise ValueError(f"unknown split mode {self.mode!r}")


def scenario_split(table: DataTable, spec: SplitSpec | None = None) -> tuple[DataTable, DataTable]:
    """Hold out the contiguous tail of every scenario's time series.

    Each scenario contributes round(n_s * (1 - train_fraction)) validation rows,
    so every mobility pattern appears on both sides. Scenarios listed in
    ``holdout_scenarios`` go to validation whole.
    """
    spec = spec or SplitSpec()
    if spec.mode != "scenario_based":
        raise ValueError("scenario_split needs mode scenario_based; use k_fold for folds")
    if "scenario" not in table:
        raise KeyError("table has no scenario column")
    scen = table["scenario"]
    names = list(dict.fromkeys(scen.tolist()))
    unknown = set(spec.holdout_scenarios) - set(names)
    if unknown:
        raise ValueError(f"unknown holdout scenarios: {sorted(unknown)}")
    val = np.zeros(table.row_count, dtype=bool)
    for name in names:
        rows = np.flatnonzero(scen == name)
        if "timestamp_ms" in table:
            rows = rows[np.argsort(table["timestamp_ms"][rows], kind="stable")]
        if name in spec.holdout_scenarios:
            val[rows] = True
            continue
        n_val = int(round_half_away(len(rows) * (1.0 - spec.train_fraction)))
        if n_val:
            val[rows[len(rows) - n_val :]] = True
    return table.take(np.flatnonzero(~val)), table.take(np.flatnonzero(val))


def k_fold(n: int, spec: SplitSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffled k-fold index pairs (train, validation)."""
    perm = np.random.default_rng(spec.seed).permutation(n)
    parts = np.array_split(perm, spec.folds)
    return [(np.sort(np.concatenate(parts[:i] + parts[i + 1 :])), np.sort(parts[i])) for i in range(spec.folds)]


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} targets, {yhat.size} predictions")
    if y.size == 0:
        raise ValueError("empty input")
    return y, yhat


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mape(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    if np.any(y == 0):
        raise ZeroDivisionError("MAPE undefined for a zero target")
    return float(100.0 * np.mean(np.abs(y - yhat) / np.abs(y)))


def rounded_cqi(yhat) -> np.ndarray:
    return np.clip(round_half_away(np.asarray(yhat, dtype=float)), CQI_MIN, CQI_MAX)


def accuracy(y, yhat) -> float:
    """Percent of rows whose rounded, clamped prediction equals the integer target."""
    y, yhat = _pair(y, yhat)
    return float(100.0 * np.mean(rounded_cqi(yhat) == y))


@dataclass(frozen=True)
class ErrorRow:
    row: int
    actual: float
    predicted: float
    abs_error: float


def top_errors(y, yhat, n: int = 10) -> list[ErrorRow]:
    """Largest absolute errors first; equal errors keep row order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ValueError("length mismatch")
    err = np.abs(yhat - y)
    order = np.lexsort((np.arange(len(err)), -err))[:n]
    return [ErrorRow(int(i), float(y[i]), float(yhat[i]), float(err[i])) for i in order]


@dataclass(frozen=True)
class MetricsReport:
    rmse_raw: float
    rmse_normalized: float
    mape_percent: float
    accuracy_percent: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(**d)


def metrics_report(y, yhat) -> MetricsReport:
    r = rmse(y, yhat)
    return MetricsReport(r, r / CQI_MAX, mape(y, yhat), accuracy(y, yhat), int(np.size(y)))


@dataclass(frozen=True)
class GateConfig:
    top_n: int = 10
    share_fraction: float = 0.5
    # only errors at least this large count towards the concentration rule;
    # spikes sit >= 4 CQI steps from their neighbours
    min_error: float = 4.0


def spike_pattern(errors: list[ErrorRow], cfg: GateConfig | None = None) -> float | None:
    """Actual value shared by at least share_fraction of the top-n large errors, if any."""
    cfg = cfg or GateConfig()
    top = errors[: cfg.top_n]
    if not top:
        return None
    values = [e.actual for e in top if e.abs_error >= cfg.min_error]
    if not values:
        return None
    uniq, counts = np.unique(values, return_counts=True)
    best = int(np.argmax(counts))  # first, i.e. smallest, value on ties
    if counts[best] >= cfg.share_fraction * cfg.top_n:
        return float(uniq[best])
    return None


@dataclass
class Comparison:
    reports: dict[str, MetricsReport]
    errors: dict[str, list[ErrorRow]]
    verdict: str
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "reasons": self.reasons,
            "models": {k: v.to_dict() for k, v in self.reports.items()},
            "top_errors": {k: [asdict(e) for e in v] for k, v in self.errors.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        return format_table(self.reports)


def format_table(reports: dict[str, MetricsReport]) -> str:
    """Aligned text table with RMSE, MAPE and accuracy columns."""
    head = ("model", "RMSE", "RMSE/15", "MAPE (%)", "Accuracy (%)", "n")
    rows = [
        (name, f"{r.rmse_raw:.4f}", f"{r.rmse_normalized:.4f}", f"{r.mape_percent:.2f}", f"{r.accuracy_percent:.2f}", str(r.n))
        for name, r in reports.items()
    ]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    fmt = lambda cells: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths)))
    lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines)


def compare_models(
    predictions: dict[str, np.ndarray],
    y,
    feature_set: FeatureSet | None = None,
    available=None,
    gate: GateConfig | None = None,
) -> Comparison:
    """Metrics per model and the validation verdict.

    The availability gate is checked first: a feature set that cannot be fed
    at runtime sends the workflow back to problem specification, whatever the
    errors look like. Otherwise concentrated top errors on one target value
    point at corrupt data and send it back to preprocessing.
    """
    if not predictions:
        raise ValueError("need at least one model")
    gate = gate or GateConfig()
    y = np.asarray(y, dtype=float)
    reports = {k: metrics_report(y, p) for k, p in predictions.items()}
    errors = {k: top_errors(y, p, gate.top_n) for k, p in predictions.items()}
    reasons = []
    if feature_set is not None and available is not None:
        missing = feature_availability_check(feature_set, available)
        if missing:
            reasons.append("features unavailable at runtime: " + ", ".join(missing))
            return Comparison(reports, errors, FALLBACK_PHASE1, reasons)
    for name, errs in errors.items():
        value = spike_pattern(errs, gate)
        if value is not None:
            reasons.append(f"{name}: top-{gate.top_n} errors concentrate on actual value {value:g}")
    return Comparison(reports, errors, FALLBACK_PHASE2 if reasons else ACCEPT, reasons)
