"""Windowed anomaly scoring, k-means clustering of anomaly windows and
nearest-centroid categorization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ingest import MonitoringRecord

SUMMARY_FIELDS = ("observed", "predicted", "residual_rmse", "ue_count", "handovers", "demand")
ANOMALY_CLASSES = ("mie_surge", "route_shift", "demand_drop", "unknown")
UNKNOWN = "unknown"


@dataclass(frozen=True)
class Window:
    start_tick: int
    end_tick: int
    summary: tuple[float, ...]

    def __post_init__(self):
        if self.end_tick <= self.start_tick:
            raise ValueError("window end must come after its start")
        if len(self.summary) != len(SUMMARY_FIELDS) or not np.all(np.isfinite(self.summary)):
            raise ValueError("window summary must hold 6 finite values")

    @property
    def residual(self) -> float:
        return self.summary[2]

    def vector(self) -> np.ndarray:
        return np.asarray(self.summary, dtype=float)


@dataclass(frozen=True)
class AnomalyConfig:
    window_ticks: int = 50
    min_history: int = 10
    threshold: float = 3.0
    eps: float = 1e-9
    max_score: float = 1e6
    history_limit: int | None = None
    keep_detected: bool = False  # whether detected windows join the history


@dataclass(frozen=True)
class AnomalyScore:
    value: float
    window: Window
    threshold: float = 3.0


def score_window(history: list[Window], current: Window, cfg: AnomalyConfig | None = None) -> AnomalyScore | None:
    """z-score of the current residual RMSE against the trailing history.

    Returns None while the history is shorter than ``min_history``; the
    caller simply waits for more windows.
    """
    cfg = cfg or AnomalyConfig()
    if len(history) < cfg.min_history:
        return None
    h = np.array([w.residual for w in history], dtype=float)
    mu = h.mean()
    sd = max(float(np.sqrt(np.mean((h - mu) ** 2))), cfg.eps)
    z = (current.residual - mu) / sd
    return AnomalyScore(float(np.clip(z, -cfg.max_score, cfg.max_score)), current, cfg.threshold)


def detect(score: AnomalyScore | None) -> bool:
    return score is not None and score.value >= score.threshold


def summarize_window(
    records: list[MonitoringRecord],
    predictions,
    start_tick: int,
    end_tick: int,
    ticks=None,
) -> Window:
    """Area-level aggregate over every UE and gNB seen in [start_tick, end_tick).

    ``predictions`` aligns with ``records``; None marks a missing prediction
    and those rows are left out of the predicted mean and the residual.
    Handovers are serving-gNB changes between consecutive records of one UE,
    in the order given (or by ``ticks`` when supplied).
    """
    if not records:
        raise ValueError("empty window")
    preds = [None if p is None else float(p) for p in predictions]
    if len(preds) != len(records):
        raise ValueError("one prediction slot per record required")
    obs = np.array([r.metrics["wb_cqi"] for r in records], dtype=float)
    have = np.array([p is not None for p in preds])
    if not have.any():
        raise ValueError("window has no predictions")
    pv = np.array([p for p in preds if p is not None])
    resid = float(np.sqrt(np.mean((pv - obs[have]) ** 2)))
    order = range(len(records)) if ticks is None else np.argsort(np.asarray(ticks), kind="stable")
    last: dict = {}
    handovers = 0
    for i in order:
        r = records[i]
        prev = last.get(r.ue_id)
        if prev is not None and prev != r.gnb_id:
            handovers += 1
        last[r.ue_id] = r.gnb_id
    demand = np.array([r.metrics.get("demand_bps", 0.0) for r in records], dtype=float)
    summary = (float(obs.mean()), float(pv.mean()), resid, float(len(last)), float(handovers), float(demand.mean()))
    return Window(int(start_tick), int(end_tick), summary)


# -- clustering ------------------------------------------------------------


@dataclass
class ClusterModel:
    centroids: np.ndarray
    inertia: float
    scale: np.ndarray
    center: np.ndarray
    radius: float = np.inf
    labels: dict[int, str] | None = None
    recommended: dict[str, str] = field(default_factory=dict)
    inertia_history: list[float] = field(default_factory=list)
    n_iter: int = 0
    weights: np.ndarray | None = None  # per-dimension weights; 0 drops a dimension

    def __post_init__(self):
        if self.weights is None:
            self.weights = np.ones(len(self.scale))

    @property
    def k(self) -> int:
        return len(self.centroids)

    def centroid_points(self) -> np.ndarray:
        """Centroids in the original (unscaled) coordinates."""
        w = np.where(self.weights > 0, self.weights, 1.0)
        return self.centroids / w * self.scale + self.center

    def transform(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.center) / self.scale * self.weights

    def nearest(self, x) -> tuple[int, float]:
        z = self.transform(x)[0]
        d = np.sqrt(((self.centroids - z) ** 2).sum(axis=1))
        j = int(np.argmin(d))
        return j, float(d[j])

    def to_dict(self) -> dict:
        return {
            "centroids": self.centroids.tolist(),
            "inertia": self.inertia,
            "scale": self.scale.tolist(),
            "center": self.center.tolist(),
            "weights": self.weights.tolist(),
            "radius": self.radius,
            "labels": None if self.labels is None else {str(k): v for k, v in self.labels.items()},
            "recommended": self.recommended,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ClusterModel:
        labels = d.get("labels")
        return cls(
            np.asarray(d["centroids"], dtype=float),
            float(d["inertia"]),
            np.asarray(d["scale"], dtype=float),
            np.asarray(d["center"], dtype=float),
            float(d.get("radius", np.inf)),
            None if labels is None else {int(k): v for k, v in labels.items()},
            dict(d.get("recommended", {})),
            weights=None if d.get("weights") is None else np.asarray(d["weights"], dtype=float),
        )


def _sq_dist(X, C) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(X, k, rng) -> np.ndarray:
    n = len(X)
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        # every remaining point coincides with a centre: pick uniformly
        i = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        centers.append(X[i])
        d2 = np.minimum(d2, ((X - X[i]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(Z, C, max_iter):
    lab = np.argmin(_sq_dist(Z, C), axis=1)
    history = [float(((Z - C[lab]) ** 2).sum())]
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(len(C)):
            members = Z[lab == j]
            if len(members):
                C[j] = members.mean(axis=0)
        new = np.argmin(_sq_dist(Z, C), axis=1)
        history.append(float(((Z - C[new]) ** 2).sum()))
        if np.array_equal(new, lab):
            break
        lab = new
    return C, lab, history, it


def kmeans_fit(
    points,
    k: int,
    seed: int = 0,
    *,
    max_iter: int = 100,
    standardize: bool = False,
    quantile: float = 0.99,
    n_init: int = 1,
    weights=None,
) -> ClusterModel:
    """k-means++ seeding followed by Lloyd iterations until assignments stop changing.

    With ``standardize`` the summary dimensions are z-scored first (they
    mix CQI units with UE counts and bit rates); the scaling is kept in the
    model. ``radius`` is the ``quantile`` of training point-to-centroid
    distances and bounds what categorize accepts. ``n_init`` restarts draw
    successive seedings from one generator and the lowest final inertia wins.
    ``weights`` multiply the (scaled) dimensions; a zero weight drops one.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or k < 1 or n_init < 1:
        raise ValueError("points must be (n, d), k >= 1 and n_init >= 1")
    if len(np.unique(X, axis=0)) < k:
        raise ValueError(f"need at least {k} distinct points")
    center = X.mean(axis=0) if standardize else np.zeros(X.shape[1])
    scale = X.std(axis=0) if standardize else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    w = np.ones(X.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (X.shape[1],) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative, one per dimension, not all zero")
    Z = (X - center) / scale * w
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        run = _lloyd(Z, _kmeans_pp(Z, k, rng), max_iter)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    C, lab, history, it = best
    dist = np.sqrt(((Z - C[lab]) ** 2).sum(axis=1))
    radius = float(np.quantile(dist, quantile))
    return ClusterModel(C, history[-1], scale, center, radius, inertia_history=history, n_iter=it, weights=w)


def assign(cm: ClusterModel, points) -> np.ndarray:
    return np.argmin(_sq_dist(cm.transform(points), cm.centroids), axis=1)


def label_clusters(cm: ClusterModel, points, names, recommended: dict[str, str] | None = None) -> ClusterModel:
    """Name each centroid by majority vote of labeled training windows (ties: alphabetical)."""
    a = assign(cm, points)
    labels = {}
    for j in range(cm.k):
        votes = [n for n, aj in zip(names, a) if aj == j]
        if votes:
            vals, counts = np.unique(votes, return_counts=True)
            labels[j] = str(vals[int(np.argmax(counts))])
        else:
            labels[j] = UNKNOWN
    cm.labels = labels
    cm.recommended = dict(recommended or {})
    return cm


class UnlabeledModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnomalyClass:
    name: str
    recommended_model_id: str = ""
    centroid: int = -1


def categorize(cm: ClusterModel, window: Window | np.ndarray) -> AnomalyClass:
    """Class of the nearest centroid, or unknown beyond the training radius."""
    if cm.labels is None:
        raise UnlabeledModelError("cluster model has no labels; fit on labeled test-traffic windows first")
    x = window.vector() if isinstance(window, Window) else np.asarray(window, dtype=float)
    j, d = cm.nearest(x)
    if d > cm.radius:
        return AnomalyClass(UNKNOWN, "", j)
    name = cm.labels[j]
    return AnomalyClass(name, cm.recommended.get(name, ""), j)
