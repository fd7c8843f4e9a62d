"""Gaussian-process regression of validation loss over encoded points.

Squared-exponential kernel with one length-scale per dimension. Targets are
standardized before fitting, so the signal variance is 1 on the standardized
scale. Length-scales and the noise variance are picked by coordinate ascent
on the log-marginal-likelihood over a log-spaced candidate grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

LOG_2PI = math.log(2.0 * math.pi)
MAX_JITTER = 1e-4


class FitError(RuntimeError):
    """The surrogate could not be fitted to the given data."""


def _default_lengthscale_grid() -> np.ndarray:
    return np.logspace(math.log10(0.05), math.log10(5.0), 16)


def _default_noise_grid() -> np.ndarray:
    return np.logspace(-6.0, 0.0, 16)


@dataclass
class GPConfig:
    """Surrogate settings.

    ``lengthscale_grid`` may be one grid shared by all dimensions or a list
    of per-dimension grids. ``noise_variance`` is the starting value, and the
    fixed value when ``fit_noise`` is false.
    """

    signal_variance: float = 1.0
    noise_variance: float = 1e-4
    jitter: float = 1e-10
    lengthscale_grid: np.ndarray | list = field(default_factory=_default_lengthscale_grid)
    noise_grid: np.ndarray = field(default_factory=_default_noise_grid)
    fit_noise: bool = True
    lml_restarts: int = 3
    max_sweeps: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 1e-12 <= self.jitter <= MAX_JITTER:
            raise ValueError("jitter must lie in [1e-12, 1e-4]")
        if self.signal_variance <= 0 or self.noise_variance < 0:
            raise ValueError("variances must be positive (noise may be zero)")

    def grids(self, dims: int) -> list[np.ndarray]:
        g = self.lengthscale_grid
        if len(g) and np.ndim(g[0]) == 1:
            grids = [np.asarray(x, dtype=float) for x in g]
            if len(grids) != dims:
                raise ValueError(f"expected {dims} lengthscale grids, got {len(grids)}")
        else:
            grids = [np.asarray(g, dtype=float)] * dims
        for x in grids:
            if np.any(x <= 0):
                raise ValueError("lengthscale candidates must be positive")
        return grids


@dataclass(frozen=True)
class Posterior:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class GPModel:
    train_x: np.ndarray
    losses: np.ndarray
    y_mean: float
    y_scale: float
    lengthscales: np.ndarray
    signal_variance: float
    noise_variance: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def dims(self) -> int:
        return self.train_x.shape[1]

    @property
    def train_y(self) -> np.ndarray:
        """Standardized targets."""
        return (self.losses - self.y_mean) / self.y_scale

    @property
    def prior_variance(self) -> float:
        return self.signal_variance * self.y_scale**2

    def to_dict(self) -> dict:
        return {
            "dims": self.dims,
            "lengthscales": self.lengthscales.tolist(),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
            "jitter": self.jitter,
            "train_x": self.train_x.tolist(),
            "losses": self.losses.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "GPModel":
        return condition(
            np.asarray(data["train_x"], dtype=float),
            np.asarray(data["losses"], dtype=float),
            np.asarray(data["lengthscales"], dtype=float),
            noise_variance=data["noise_variance"],
            signal_variance=data["signal_variance"],
            jitter=data["jitter"],
        )

    @classmethod
    def loads(cls, text: str) -> "GPModel":
        return cls.from_dict(json.loads(text))


def kernel(x1, x2, lengthscales, signal_variance: float = 1.0) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ls = np.broadcast_to(np.asarray(lengthscales, dtype=float), x1.shape)
    if x1.shape != x2.shape:
        raise ValueError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    return float(signal_variance * np.exp(-0.5 * np.sum(((x1 - x2) / ls) ** 2)))


def kernel_matrix(a: np.ndarray, b: np.ndarray, lengthscales, signal_variance=1.0) -> np.ndarray:
    a = np.atleast_2d(a) / lengthscales
    b = np.atleast_2d(b) / lengthscales
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    np.maximum(sq, 0.0, out=sq)
    return signal_variance * np.exp(-0.5 * sq)


def standardize(losses) -> tuple[np.ndarray, float, float]:
    y = np.asarray(losses, dtype=float)
    mean = float(y.mean())
    scale = float(y.std())
    if not scale > 0:
        scale = 1.0
    return (y - mean) / scale, mean, scale


def destandardize(y, mean: float, scale: float) -> np.ndarray:
    return np.asarray(y) * scale + mean


def _factor(k: np.ndarray, jitter: float) -> tuple[np.ndarray, float]:
    """Cholesky of ``k + jitter*I``, escalating jitter by 10x up to 1e-4."""
    n = k.shape[0]
    while True:
        try:
            chol = linalg.cholesky(k + jitter * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(chol)):
                return chol, jitter
        except linalg.LinAlgError:
            pass
        if jitter >= MAX_JITTER:
            raise FitError("kernel matrix is not positive definite after jitter escalation")
        jitter = min(jitter * 10.0, MAX_JITTER)


def condition(
    points,
    losses,
    lengthscales,
    noise_variance: float = 0.0,
    signal_variance: float = 1.0,
    jitter: float = 1e-10,
) -> GPModel:
    """Build a model with fixed kernel settings (no likelihood search)."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    losses = np.asarray(losses, dtype=float)
    if x.shape[0] != losses.shape[0] or x.shape[0] < 1:
        raise FitError("need at least one point and one loss per point")
    if not np.all(np.isfinite(losses)):
        raise FitError("losses must be finite")
    y, mean, scale = standardize(losses)
    ls = np.broadcast_to(np.asarray(lengthscales, dtype=float), (x.shape[1],)).copy()
    k = kernel_matrix(x, x, ls, signal_variance) + noise_variance * np.eye(len(x))
    chol, jitter = _factor(k, jitter)
    alpha = linalg.cho_solve((chol, True), y, check_finite=False)
    return GPModel(
        train_x=x,
        losses=losses,
        y_mean=mean,
        y_scale=scale,
        lengthscales=ls,
        signal_variance=signal_variance,
        noise_variance=float(noise_variance),
        jitter=jitter,
        chol=chol,
        alpha=alpha,
    )


def log_marginal_likelihood(model: GPModel) -> float:
    y = model.train_y
    n = len(y)
    return float(
        -0.5 * y @ model.alpha - np.log(np.diag(model.chol)).sum() - 0.5 * n * LOG_2PI
    )


class _LMLObjective:
    """Caches per-dimension squared differences so each evaluation is one Cholesky."""

    def __init__(self, x: np.ndarray, y: np.ndarray, cfg: GPConfig):
        self.y = y
        self.n = len(y)
        self.sq = (x[:, None, :] - x[None, :, :]) ** 2  # (n, n, d)
        self.sv = cfg.signal_variance
        self.jitter = cfg.jitter
        self.cache: dict[tuple, float] = {}

    def __call__(self, ls: tuple, noise: float) -> float:
        key = ls + (noise,)
        if key in self.cache:
            return self.cache[key]
        inv = 1.0 / np.square(np.asarray(ls))
        k = self.sv * np.exp(-0.5 * (self.sq @ inv))
        k[np.diag_indices(self.n)] += noise
        try:
            chol, _ = _factor(k, self.jitter)
        except FitError:
            val = -math.inf
        else:
            alpha = linalg.cho_solve((chol, True), self.y, check_finite=False)
            val = float(-0.5 * self.y @ alpha - np.log(np.diag(chol)).sum() - 0.5 * self.n * LOG_2PI)
        self.cache[key] = val
        return val


def fit(points, losses, cfg: GPConfig | None = None) -> GPModel:
    """Fit length-scales (and noise) by coordinate ascent on the LML.

    The ascent starts from all-ones length-scales and from ``cfg.lml_restarts``
    random grid points; the best state over all starts is kept.
    """
    cfg = cfg or GPConfig()
    x = np.atleast_2d(np.asarray(points, dtype=float))
    losses = np.asarray(losses, dtype=float)
    if x.shape[0] < 2:
        raise FitError("at least 2 points are required")
    if losses.shape != (x.shape[0],):
        raise FitError("one loss per point is required")
    if not np.all(np.isfinite(losses)):
        raise FitError("losses must be finite")
    d = x.shape[1]
    grids = cfg.grids(d)
    noise_grid = np.asarray(cfg.noise_grid, dtype=float) if cfg.fit_noise else np.array([])
    y, _, _ = standardize(losses)
    lml = _LMLObjective(x, y, cfg)
    rng = np.random.default_rng(cfg.seed)

    starts = [((1.0,) * d, cfg.noise_variance)]
    for _ in range(cfg.lml_restarts):
        ls0 = tuple(float(g[rng.integers(len(g))]) for g in grids)
        nz0 = float(noise_grid[rng.integers(len(noise_grid))]) if len(noise_grid) else cfg.noise_variance
        starts.append((ls0, nz0))

    best_state, best_val = starts[0], lml(*starts[0])
    for ls, noise in starts:
        ls = list(ls)
        val = lml(tuple(ls), noise)
        for _ in range(cfg.max_sweeps):
            improved = False
            for j in range(d):
                for cand in grids[j]:
                    trial = ls.copy()
                    trial[j] = float(cand)
                    v = lml(tuple(trial), noise)
                    if v > val:
                        val, ls, improved = v, trial, True
            for cand in noise_grid:
                v = lml(tuple(ls), float(cand))
                if v > val:
                    val, noise, improved = v, float(cand), True
            if not improved:
                break
        if val > best_val:
            best_val, best_state = val, (tuple(ls), noise)

    if not math.isfinite(best_val):
        raise FitError("no candidate setting gave a factorizable kernel matrix")
    ls, noise = best_state
    return condition(
        x, losses, np.array(ls), noise_variance=noise,
        signal_variance=cfg.signal_variance, jitter=cfg.jitter,
    )


def predict_many(model: GPModel, xs, chunk: int = 50_000) -> tuple[np.ndarray, np.ndarray]:
    """Posterior means and variances at the rows of ``xs`` (de-standardized)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != model.dims:
        raise ValueError(f"dimension mismatch: model has {model.dims}, input has {xs.shape[1]}")
    means = np.empty(len(xs))
    variances = np.empty(len(xs))
    for lo in range(0, len(xs), chunk):
        ks = kernel_matrix(xs[lo:lo + chunk], model.train_x, model.lengthscales, model.signal_variance)
        means[lo:lo + chunk] = ks @ model.alpha
        v = linalg.solve_triangular(model.chol, ks.T, lower=True, check_finite=False)
        variances[lo:lo + chunk] = model.signal_variance - np.einsum("ij,ij->j", v, v)
    np.maximum(variances, 0.0, out=variances)
    return destandardize(means, model.y_mean, model.y_scale), variances * model.y_scale**2


def predict(model: GPModel, x) -> Posterior:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dims,):
        raise ValueError(f"dimension mismatch: model has {model.dims}, input has shape {x.shape}")
    m, v = predict_many(model, x[None, :])
    return Posterior(float(m[0]), float(v[0]))
