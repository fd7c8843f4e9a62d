"""Analytic test objectives on discrete grids, and a paired search comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .optimizer import Ledger, Outcome, run_adaptive, run_random
from .space import ParamDim, ParamSpace
from .surrogate import GPConfig

BRANIN_MIN = 0.397887357729738


def branin(x1, x2):
    """Branin-Hoo on ``[-5, 10] x [0, 15]``; global minimum 0.397887."""
    a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


class BraninGrid:
    """Branin sampled on an ``n x n`` grid spanning its usual box.

    Points are grid indices ``(i, j)``; index ``i`` maps to
    ``x1 = -5 + 15 * i / (n - 1)`` and ``j`` to ``x2 = 15 * j / (n - 1)``.
    """

    def __init__(self, n: int = 32):
        self.n = n
        self.space = ParamSpace((
            ParamDim("x1", "integer-range", tuple(range(n))),
            ParamDim("x2", "integer-range", tuple(range(n))),
        ))
        self.x1 = -5.0 + 15.0 * np.arange(n) / (n - 1)
        self.x2 = 15.0 * np.arange(n) / (n - 1)
        self.values = branin(self.x1[:, None], self.x2[None, :])

    @property
    def minimum(self) -> float:
        return float(self.values.min())

    def __call__(self, point, seed: int = 0) -> Outcome:
        v = float(self.values[point[0], point[1]])
        return Outcome(v, 0.0)


@dataclass
class Comparison:
    adaptive_best: np.ndarray  # best loss per seed after warm-up + adaptive
    random_best: np.ndarray    # best loss per seed after warm-up + more random
    wins: int
    losses: int
    p_value: float

    @property
    def median_gap(self) -> float:
        return float(np.median(self.random_best) - np.median(self.adaptive_best))


def compare_search(
    objective=None,
    seeds=range(20),
    warmup: int = 10,
    iterations: int = 30,
    gp: GPConfig | None = None,
) -> Comparison:
    """Paired comparison of adaptive vs random continuation of a shared warm-up.

    For every seed both arms start from the same random warm-up ledger. The
    one-sided sign test counts seeds where the adaptive arm ends strictly
    lower; exact ties are dropped.
    """
    objective = objective or BraninGrid()
    space = objective.space
    ad, rn = [], []
    for seed in seeds:
        warm = run_random(space, objective, warmup, Ledger(), seed)
        a = run_adaptive(space, objective, iterations, Ledger(trials=warm.trials), seed, gp=gp)
        r = run_random(space, objective, iterations, Ledger(trials=warm.trials), seed)
        ad.append(min(t.loss for t in a))
        rn.append(min(t.loss for t in r))
    ad, rn = np.array(ad), np.array(rn)
    wins = int(np.sum(ad < rn))
    losses = int(np.sum(ad > rn))
    n = wins + losses
    p = float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue) if n else 1.0
    return Comparison(ad, rn, wins, losses, p)


__all__ = ["BRANIN_MIN", "BraninGrid", "Comparison", "branin", "compare_search"]
