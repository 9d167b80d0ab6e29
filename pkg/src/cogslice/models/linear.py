"""LASSO and Elastic Net fitted by cyclic coordinate descent.

Features are standardized internally (population std) and the target is
centred, so the solver minimizes

    (1/2n)||y_c - Z b||^2 + l1 * ||b||_1 + (l2/2) * ||b||^2

over standardized coefficients b. Updates run on the Gram matrix, which keeps
each sweep O(p^2) regardless of the row count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import cd_sweeps
from .config import TrainConfig


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, last_iterate: np.ndarray):
        super().__init__(msg)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class LinearModel:
    coef_std: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    y_mean: float
    l1_penalty: float
    l2_penalty: float
    kind: str = "lasso"
    n_iter: int = 0
    objective_history: tuple = field(default=(), compare=False, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.coef_std)

    @property
    def coefficients(self) -> np.ndarray:
        return self.coef_std / self.std

    @property
    def intercept(self) -> float:
        return float(self.y_mean - self.mean @ self.coefficients)

    def predict(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        return self.y_mean + Z @ self.coef_std


# sweeps between attempts to solve the current support exactly
POLISH_EVERY = 200


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def standardize(X: np.ndarray):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (X - mean) / std, mean, std


def _objective(G, c, yy, b, l1, l2):
    return 0.5 * (yy - 2 * c @ b + b @ G @ b) + l1 * np.abs(b).sum() + 0.5 * l2 * b @ b


def kkt_violation(G, c, b, l1, l2) -> float:
    """Largest violation of the optimality conditions in standardized space."""
    grad = c - G @ b - l2 * b  # (1/n) z_j^T r - l2 b_j
    zero = b == 0
    v_zero = np.maximum(np.abs(grad[zero]) - l1, 0.0)
    v_nz = np.abs(grad[~zero] - l1 * np.sign(b[~zero]))
    return float(max(v_zero.max(initial=0.0), v_nz.max(initial=0.0)))


def polish(G, c, b, l1, l2):
    """Exact minimizer on b's support with b's signs held fixed, or None.

    On the orthant where the signs are fixed the objective is a smooth
    quadratic, so (G_AA + l2 I) b_A = c_A - l1 sign(b_A) solves it. The result
    is only useful when the signs survive the solve.
    """
    active = np.flatnonzero(b)
    if active.size == 0:
        return None
    s = np.sign(b[active])
    A = G[np.ix_(active, active)] + l2 * np.eye(active.size)
    try:
        sol = np.linalg.solve(A, c[active] - l1 * s)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.sign(sol) == s):
        return None
    out = np.zeros_like(b)
    out[active] = sol
    return out


def coordinate_descent(G, c, yy, l1, l2, tol, kkt_tol, max_iter, b0=None, track=False, polish_every=POLISH_EVERY):
    """Minimize the penalized objective given Gram matrix G = Z^T Z / n and c = Z^T y / n.

    Converged once a sweep moves no coefficient by ``tol`` or more and the
    optimality conditions hold within ``kkt_tol``. Every ``polish_every``
    sweeps the support found so far is solved exactly; the polished point is
    kept only if it satisfies the optimality conditions and does not raise
    the objective. This rescues ill-conditioned designs, where plain cyclic
    updates crawl. Returns (coefficients, sweeps, objective history); the
    history is per sweep when ``track``.
    """
    G = np.ascontiguousarray(G, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    b = np.zeros(len(c)) if b0 is None else np.array(b0, dtype=float)
    history = [_objective(G, c, yy, b, l1, l2)]
    done = since_polish = 0
    while done < max_iter:
        chunk = 1 if track else min(max_iter - done, polish_every)
        sweeps, change = cd_sweeps(G, c, b, float(l1), float(l2), float(tol), chunk)
        done += sweeps
        since_polish += sweeps
        if track:
            history.append(_objective(G, c, yy, b, l1, l2))
        if change < tol and kkt_violation(G, c, b, l1, l2) <= kkt_tol:
            if not track:
                history.append(_objective(G, c, yy, b, l1, l2))
            return b, done, history
        if since_polish >= polish_every:
            since_polish = 0
            p = polish(G, c, b, l1, l2)
            if p is not None and kkt_violation(G, c, p, l1, l2) <= kkt_tol:
                obj = _objective(G, c, yy, p, l1, l2)
                if obj <= _objective(G, c, yy, b, l1, l2):
                    history.append(obj)
                    return p, done, history
    raise ConvergenceError(f"coordinate descent did not converge in {max_iter} sweeps", b)


def _fit(X, y, l1, l2, cfg: TrainConfig, kind: str, b0=None) -> LinearModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows")
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("training data has missing values")
    Z, mean, std = standardize(X)
    y_mean = float(y.mean())
    yc = y - y_mean
    G = Z.T @ Z / n
    c = Z.T @ yc / n
    yy = float(yc @ yc / n)
    b, it, hist = coordinate_descent(G, c, yy, l1, l2, cfg.tol, cfg.kkt_tol, cfg.max_iter, b0)
    return LinearModel(b, mean, std, y_mean, float(l1), float(l2), kind, it, tuple(hist))


def _rmse(a, b) -> float:
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def _path(X, y, penalties, cfg, kind, validation):
    """Fit along penalties (descending, warm-started); keep the best on validation."""
    Xv, yv = validation
    best = None
    b0 = None
    for l1, l2 in sorted(penalties, key=lambda p: -(p[0] + p[1])):
        model = _fit(X, y, l1, l2, cfg, kind, b0)
        b0 = model.coef_std
        score = _rmse(model.predict(Xv), yv)
        # strict improvement only, so ties keep the larger penalty
        if best is None or score < best[0]:
            best = (score, model)
    return best[1]


def train_lasso(X, y, cfg: TrainConfig | None = None, validation=None, l1: float | None = None) -> LinearModel:
    cfg = cfg or TrainConfig()
    if validation is not None and l1 is None:
        return _path(X, y, [(lam, 0.0) for lam in cfg.lambda_grid], cfg, "lasso", validation)
    return _fit(X, y, cfg.lasso_l1 if l1 is None else l1, 0.0, cfg, "lasso")


def train_elasticnet(
    X, y, cfg: TrainConfig | None = None, validation=None, l1: float | None = None, l2: float | None = None
) -> LinearModel:
    cfg = cfg or TrainConfig()
    if validation is not None and l1 is None and l2 is None:
        grid = [cfg.enet_penalties(a) for a in cfg.lambda_grid]
        return _path(X, y, grid, cfg, "elasticnet", validation)
    d1, d2 = cfg.enet_penalties()
    return _fit(X, y, d1 if l1 is None else l1, d2 if l2 is None else l2, cfg, "elasticnet")
