from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np


def default_lambda_grid() -> list[float]:
    return [float(x) for x in np.logspace(-4, 0, 20)]


@dataclass
class TrainConfig:
    seed: int = 0
    # linear models; l1/l2 are the penalty weights in standardized space
    lasso_l1: float = 1e-3
    enet_alpha: float = 1e-3
    enet_l1_ratio: float = 0.5
    lambda_grid: list[float] = field(default_factory=default_lambda_grid)
    tol: float = 1e-8
    kkt_tol: float = 1e-7
    max_iter: int = 1_000_000
    # random forest
    forest_trees: int = 100
    forest_mtry: int | None = None
    forest_min_leaf: int = 2
    forest_max_depth: int | None = None
    forest_bootstrap: bool = True
    # gradient boosting
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int | None = 3
    gbt_trees: int = 100
    gbt_min_leaf: int = 1
    n_jobs: int = 1

    def __post_init__(self):
        if self.tol <= 0 or self.kkt_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.forest_trees < 1 or self.forest_min_leaf < 1 or self.gbt_trees < 0 or self.max_iter < 1:
            raise ValueError("tree counts and iteration limits must be positive")
        if not 0.0 < self.gbt_learning_rate <= 1.0:
            raise ValueError("learning rate must lie in (0, 1]")
        if not 0.0 <= self.enet_l1_ratio <= 1.0:
            raise ValueError("enet_l1_ratio must lie in [0, 1]")

    def enet_penalties(self, alpha: float | None = None) -> tuple[float, float]:
        a = self.enet_alpha if alpha is None else alpha
        return a * self.enet_l1_ratio, a * (1.0 - self.enet_l1_ratio)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return cls(**d)
