"""Probability-of-improvement acquisition with two alternating targets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import special

from .space import ParamPoint, ParamSpace
from .surrogate import GPModel, Posterior, predict_many

BEST_SO_FAR = "best-so-far"
IMPROVEMENT_25 = "improvement-25pct"
IMPROVEMENT_FACTOR = 0.75


class SpaceExhausted(RuntimeError):
    """Every candidate has already been evaluated."""


@dataclass(frozen=True)
class AcquisitionTarget:
    value: float
    label: str


def normal_cdf(z):
    """Standard normal CDF, ``0.5 * erfc(-z / sqrt(2))``.

    The complementary error function keeps full relative precision in the
    lower tail; ``normal_cdf(0)`` is exactly 0.5.
    """
    out = 0.5 * special.erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def dual_targets(best_loss: float) -> tuple[AcquisitionTarget, AcquisitionTarget]:
    if not math.isfinite(best_loss):
        raise ValueError("best loss must be finite")
    return (
        AcquisitionTarget(best_loss, BEST_SO_FAR),
        AcquisitionTarget(IMPROVEMENT_FACTOR * best_loss, IMPROVEMENT_25),
    )


def target_for_iteration(best_loss: float, iteration: int) -> AcquisitionTarget:
    """Odd adaptive iterations (1, 3, ...) chase the best loss, even ones the 25% target."""
    best, improved = dual_targets(best_loss)
    return best if iteration % 2 == 1 else improved


def improvement_z(mean, variance, target_value: float) -> np.ndarray:
    """Standardized improvement ``(L* - mean) / sigma``.

    Zero-variance entries take the limit: +inf below the target, 0 on it,
    -inf above. PI is ``normal_cdf`` of this, so ranking by it is ranking by PI.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    gap = target_value - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, gap / np.where(sd > 0, sd, 1.0), np.sign(gap) * np.inf)
    return np.where((sd == 0) & (gap == 0), 0.0, z)


def probability_of_improvement(post: Posterior, target: AcquisitionTarget) -> float:
    if post.variance < 0:
        raise ValueError("posterior variance must be non-negative")
    return normal_cdf(improvement_z(post.mean, post.variance, target.value))


@dataclass
class CandidateSet:
    """Candidate points held as rank rows plus their encoded coordinates."""

    space: ParamSpace
    ranks: np.ndarray
    coords: np.ndarray

    @classmethod
    def from_ranks(cls, space: ParamSpace, ranks: np.ndarray) -> "CandidateSet":
        ranks = np.asarray(ranks, dtype=np.int64)
        return cls(space, ranks, space.encode_ranks(ranks))

    @classmethod
    def from_points(cls, space: ParamSpace, points: Iterable[Sequence]) -> "CandidateSet":
        ranks = np.array([space.ranks(p) for p in points], dtype=np.int64).reshape(-1, len(space))
        return cls.from_ranks(space, ranks)

    @classmethod
    def full(cls, space: ParamSpace, max_points: int = 500_000) -> "CandidateSet":
        return cls.from_ranks(space, space.rank_grid(max_points))

    @classmethod
    def sampled(cls, space: ParamSpace, rng: np.random.Generator, n: int = 50_000) -> "CandidateSet":
        ranks = np.column_stack([rng.integers(c, size=n) for c in space.counts])
        return cls.from_ranks(space, np.unique(ranks, axis=0))

    def __len__(self) -> int:
        return len(self.ranks)

    def flat_indices(self) -> np.ndarray:
        return np.ravel_multi_index(self.ranks.T, self.space.counts)

    def point(self, i: int) -> ParamPoint:
        return self.space.from_ranks(self.ranks[i])


def propose(
    model: GPModel,
    candidates: CandidateSet,
    target: AcquisitionTarget,
    visited: Iterable[Sequence] = (),
) -> ParamPoint:
    """Return the unvisited candidate with the highest PI.

    Ties go to the lexicographically smallest point (rank order, as in
    enumeration).
    """
    space = candidates.space
    flat = candidates.flat_indices()
    seen = np.array(sorted(space.flat_index(p) for p in visited), dtype=np.int64)
    free = ~np.isin(flat, seen)
    if not free.any():
        raise SpaceExhausted("all candidates have been evaluated")
    mean, var = predict_many(model, candidates.coords[free])
    z = improvement_z(mean, var, target.value)
    idx = np.flatnonzero(free)
    best = idx[z == z.max()]
    winner = best[np.argmin(flat[best])]
    return candidates.point(winner)
