"""Weighted average of the four regressors with exhaustive weight search."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ingest import round_half_away

COMPONENT_ORDER = ("lasso", "elasticnet", "forest", "gbt")
# relative RMSE difference treated as a tie
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CombinedModel:
    components: tuple  # models in COMPONENT_ORDER
    weights: tuple[int, ...]  # integer percent, sums to 100

    def __post_init__(self):
        if len(self.components) != len(self.weights):
            raise ValueError("one weight per component required")
        if any(w < 0 for w in self.weights) or sum(self.weights) != 100:
            raise ValueError(f"weights must be nonnegative percents summing to 100, got {self.weights}")

    @property
    def n_features(self) -> int:
        return self.components[0].n_features

    def predict(self, X) -> np.ndarray:
        preds = [m.predict(X) if w else None for m, w in zip(self.components, self.weights)]
        return blend(preds, self.weights)


def blend(preds, weights) -> np.ndarray:
    """Sum of (w/100) * prediction in component order, skipping zero weights."""
    out = None
    for p, w in zip(preds, weights):
        if w == 0:
            continue
        term = (w / 100.0) * np.asarray(p, dtype=float)
        out = term if out is None else out + term
    return out


def weight_grid(step: int = 1, k: int = 4) -> np.ndarray:
    """All k-tuples of multiples of ``step`` summing to 100, in lexicographic order."""
    if step <= 0 or 100 % step:
        raise ValueError("step must be a positive divisor of 100")
    levels = np.arange(0, 101, step)
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for v in levels[levels <= remaining]:
            rec(prefix + [int(v)], remaining - int(v), slots - 1)

    rec([], 100, k)
    return np.array(out, dtype=np.int64)


def _accuracy(y, yhat) -> float:
    r = np.clip(round_half_away(yhat), 1, 15)
    return float(np.mean(r == y) * 100.0)


@dataclass(frozen=True)
class WeightSearchResult:
    weights: tuple[int, ...]
    rmse: float
    accuracy: float
    evaluated: int


def search_combined_weights(preds, y, step: int = 1, chunk: int = 2048) -> WeightSearchResult:
    """Try every weight tuple at ``step`` percent and keep the lowest RMSE.

    Ties (within TIE_RTOL) go to higher accuracy, then fewer nonzero
    weights, then the lexicographically smallest tuple.
    """
    P = np.asarray(preds, dtype=float)
    y = np.asarray(y, dtype=float)
    if P.ndim != 2 or P.shape[1] != len(y):
        raise ValueError("preds must be (models, n) matching y")
    if len(y) == 0:
        raise ValueError("empty validation set")
    W = weight_grid(step, P.shape[0])
    F = W / 100.0
    rmse = np.empty(len(W))
    for s in range(0, len(W), chunk):
        f = F[s : s + chunk]
        # same operation order as blend(); adding the zero-weight terms is exact
        acc = np.zeros((len(f), len(y)))
        for i in range(P.shape[0]):
            acc += f[:, i : i + 1] * P[i]
        rmse[s : s + chunk] = np.sqrt(np.mean((acc - y) ** 2, axis=1))
    best = rmse.min()
    tied = np.flatnonzero(rmse <= best + TIE_RTOL * max(best, 1e-300))

    def key(i):
        w = W[i]
        acc = _accuracy(y, blend(P, w))
        return (-acc, int(np.count_nonzero(w)), tuple(int(v) for v in w))

    winner = min(tied, key=key)
    w = tuple(int(v) for v in W[winner])
    return WeightSearchResult(w, float(rmse[winner]), _accuracy(y, blend(P, w)), len(W))
