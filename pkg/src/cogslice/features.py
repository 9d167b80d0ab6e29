"""Correlation ranking, feature selection, polynomial expansion and the
deployment-availability gate."""

from __future__ import annotations

import fnmatch
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .preprocess import NormalizationParams, normalize
from .table import DataTable

TRANSFORMS = ("identity", "square", "cube", "sqrt", "cbrt")
DEFAULT_EXCLUSIONS = ("mcs1_dl",)
# columns that are time bookkeeping or derived from the target, never features
DERIVED_FROM_TARGET = ("mcs*", "*cqi*")
NON_FEATURES = ("timestamp_ms", "dt_ms")

# Fields a sleeping IoT device cannot report while asleep: the RRC measurements.
SLEEPING_IOT_UNAVAILABLE = frozenset({"rsrp", "rsrq", "phr", "wb_cqi"})


class InsufficientDataError(ValueError):
    pass


class FeatureDomainError(ValueError):
    pass


@dataclass
class CorrelationMatrix:
    names: list[str]
    values: np.ndarray
    degenerate: set[str] = field(default_factory=set)
    method: str = "pearson"

    def index(self, name: str) -> int:
        return self.names.index(name)

    def with_target(self, target: str) -> dict[str, float]:
        row = self.values[self.index(target)]
        return {n: float(row[i]) for i, n in enumerate(self.names) if n != target}


def correlation_matrix(table: DataTable, columns: list[str] | None = None, method: str = "pearson") -> CorrelationMatrix:
    """Pairwise correlation of numeric columns; zero-variance columns get 0 off the diagonal."""
    names = columns if columns is not None else table.numeric_names()
    if table.row_count < 2:
        raise InsufficientDataError("correlation needs at least 2 rows")
    X = table.matrix(names)
    if np.isnan(X).any():
        raise ValueError("correlation input has missing values; repair first")
    if method == "spearman":
        X = np.column_stack([rankdata(X[:, j]) for j in range(X.shape[1])]) if X.size else X
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    Xc = X - X.mean(axis=0)
    ss = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    degenerate = ss == 0
    safe = np.where(degenerate, 1.0, ss)
    Z = Xc / safe
    C = Z.T @ Z
    C = np.clip((C + C.T) / 2.0, -1.0, 1.0)
    C[degenerate, :] = 0.0
    C[:, degenerate] = 0.0
    np.fill_diagonal(C, 1.0)
    return CorrelationMatrix(list(names), C, {n for n, d in zip(names, degenerate) if d}, method)


def expanded_name(base: str, transform: str) -> str:
    return {
        "identity": base,
        "square": f"{base}^2",
        "cube": f"{base}^3",
        "sqrt": f"sqrt({base})",
        "cbrt": f"cbrt({base})",
    }[transform]


def apply_transform(transform: str, x):
    x = np.asarray(x, dtype=float)
    if transform == "identity":
        return x.copy()
    if transform == "square":
        return x * x
    if transform == "cube":
        return x * x * x
    if transform == "sqrt":
        return np.sqrt(x)
    if transform == "cbrt":
        return np.cbrt(x)
    raise ValueError(f"unknown transform {transform!r}")


@dataclass
class FeatureSet:
    base_features: list[str]
    expanded_features: list[tuple[str, str]]
    excluded: list[tuple[str, str]] = field(default_factory=list)
    normalization: NormalizationParams = field(default_factory=NormalizationParams)
    target: str = "wb_cqi"

    def __post_init__(self):
        self.expanded_features = [tuple(p) for p in self.expanded_features]
        self.excluded = [tuple(p) for p in self.excluded]
        clash = {n for n, _ in self.excluded} & set(self.base_features)
        if clash:
            raise ValueError(f"features both excluded and selected: {sorted(clash)}")

    @classmethod
    def full(cls, base: list[str], **kw) -> FeatureSet:
        return cls(list(base), [(b, t) for b in base for t in TRANSFORMS], **kw)

    @property
    def column_names(self) -> list[str]:
        return [expanded_name(b, t) for b, t in self.expanded_features]

    def restrict(self, keep: list[int]) -> FeatureSet:
        """Feature set using only the expanded columns at ``keep``."""
        exp = [self.expanded_features[i] for i in keep]
        base = [b for b in self.base_features if any(e[0] == b for e in exp)]
        return FeatureSet(base, exp, list(self.excluded), self.normalization, self.target)

    def to_dict(self) -> dict:
        return {
            "base_features": self.base_features,
            "expanded_features": [list(p) for p in self.expanded_features],
            "excluded": [list(p) for p in self.excluded],
            "normalization": self.normalization.to_dict(),
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSet:
        return cls(
            d["base_features"],
            d["expanded_features"],
            d.get("excluded", []),
            NormalizationParams.from_dict(d.get("normalization", {})),
            d.get("target", "wb_cqi"),
        )

    @property
    def id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return "fs-" + hashlib.sha256(blob).hexdigest()[:12]


def default_exclusions(names: list[str], target: str, patterns=DERIVED_FROM_TARGET) -> list[tuple[str, str]]:
    out = []
    for n in names:
        if n == target:
            continue
        if n in DEFAULT_EXCLUSIONS:
            out.append((n, "derived from target"))
        elif n in NON_FEATURES:
            out.append((n, "time bookkeeping"))
        elif any(fnmatch.fnmatch(n, p) for p in patterns):
            out.append((n, "matches derived-from-target pattern"))
    return out


def select_features(corr: CorrelationMatrix, target: str, k: int, exclusions=()) -> FeatureSet:
    """Top-k features by |correlation with target|, ties broken by name.

    ``exclusions`` holds names or (name, reason) pairs removed before ranking.
    """
    if target not in corr.names:
        raise KeyError(f"target {target!r} not in correlation matrix")
    excluded = [(e, "excluded") if isinstance(e, str) else tuple(e) for e in exclusions]
    gone = {e[0] for e in excluded}
    scores = corr.with_target(target)
    candidates = [n for n in scores if n not in gone]
    if k < 0 or k > len(candidates):
        raise ValueError(f"k={k} but only {len(candidates)} non-excluded features are available")
    ranked = sorted(candidates, key=lambda n: (-abs(scores[n]), n))
    excluded = [e for e in excluded if e[0] in corr.names]
    return FeatureSet.full(ranked[:k], excluded=excluded, target=target)


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray | None
    names: list[str]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def to_csv(self, target: str = "wb_cqi") -> str:
        cols = {n: self.X[:, j] for j, n in enumerate(self.names)}
        if self.y is not None:
            cols[target] = self.y
        return DataTable(cols).to_csv()

    @classmethod
    def from_csv(cls, text: str, target: str = "wb_cqi") -> FeatureMatrix:
        t = DataTable.from_csv(text)
        names = [n for n in t.names if n != target]
        return cls(t.matrix(names), t[target] if target in t else None, names)


def expand_polynomial(table: DataTable, fs: FeatureSet, tol: float = 1e-9) -> FeatureMatrix:
    """Emit x, x^2, x^3, sqrt(x), cbrt(x) for each normalized base feature."""
    cols = []
    for base, transform in fs.expanded_features:
        x = np.asarray(table[base], dtype=float)
        if np.isnan(x).any():
            raise FeatureDomainError(f"feature {base!r} has missing values")
        if x.size and (x.min() < -tol or x.max() > 1 + tol):
            raise FeatureDomainError(f"feature {base!r} is outside [0, 1]; normalize first")
        cols.append(apply_transform(transform, np.clip(x, 0.0, 1.0)))
    X = np.column_stack(cols) if cols else np.empty((table.row_count, 0))
    y = np.asarray(table[fs.target], dtype=float) if fs.target in table else None
    return FeatureMatrix(X, y, fs.column_names)


def fit_normalization(table: DataTable, fs: FeatureSet) -> FeatureSet:
    _, params = normalize(table, columns=list(fs.base_features))
    return FeatureSet(fs.base_features, fs.expanded_features, fs.excluded, params, fs.target)


def build_matrix(table: DataTable, fs: FeatureSet) -> FeatureMatrix:
    """Normalize with the stored bounds (clamped) and expand."""
    scaled, _ = normalize(table, fs.normalization)
    return expand_polynomial(scaled, fs)


def feature_vector(metrics: dict, fs: FeatureSet) -> np.ndarray:
    """Expanded input row for one monitoring record."""
    out = np.empty(len(fs.expanded_features))
    for j, (base, transform) in enumerate(fs.expanded_features):
        x = float(fs.normalization.scale(base, metrics[base]))
        out[j] = apply_transform(transform, x)
    return out


def feature_availability_check(fs: FeatureSet, available) -> list[str]:
    """Names of expanded features whose base field is not available at runtime.

    An empty list means the feature set can be deployed.
    """
    available = set(available)
    return [expanded_name(b, t) for b, t in fs.expanded_features if b not in available]


def profile_available(all_fields, unavailable=SLEEPING_IOT_UNAVAILABLE) -> set[str]:
    return set(all_fields) - set(unavailable)
