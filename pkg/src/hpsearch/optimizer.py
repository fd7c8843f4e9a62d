"""Two-stage search: uniform random warm-up, then GP/PI-guided proposals.

Every evaluated point becomes a :class:`Trial` appended to a :class:`Ledger`.
A ledger backed by a file is flushed after each trial, and the file is the
resume source of truth: all randomness is derived from ``(seed, trial id)``,
so continuing from a truncated ledger replays the uninterrupted run.

Ledger file format: one JSON object per line, keys in this order::

    {"id": 0, "point": [5, 1, 6, 3, -3, 3, 7, "Yes"], "stage": "random",
     "target_label": null, "loss": 0.41, "error_rate": 0.12,
     "status": "ok", "wall_time": 12.3}
"""

from __future__ import annotations

import json
import logging
import math
import os
import statistics
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .acquire import CandidateSet, SpaceExhausted, propose, target_for_iteration
from .space import EnumerationRefused, ParamPoint, ParamSpace
from .surrogate import FitError, GPConfig, fit

log = logging.getLogger(__name__)

STAGES = ("random", "adaptive")
STATUSES = ("ok", "diverged", "failed")
DEFAULT_PENALTY = 2.0 * math.log(4)
FULL_ENUMERATION_MAX = 500_000
SAMPLED_CANDIDATES = 50_000


class LedgerError(ValueError):
    """A ledger file could not be parsed."""

    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}: corrupt record at line {lineno}: {reason}")
        self.lineno = lineno


class ShortfallError(ValueError):
    """Fewer ok trials than requested."""


@dataclass
class Trial:
    id: int
    point: ParamPoint
    stage: str
    target_label: str | None
    loss: float
    error_rate: float
    status: str
    wall_time: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_json(self, wall_time: bool = True) -> str:
        d = asdict(self)
        d["point"] = list(self.point)
        if not wall_time:
            del d["wall_time"]
        return json.dumps(d)

    @classmethod
    def from_json(cls, line: str) -> "Trial":
        d = json.loads(line)
        t = cls(
            id=int(d["id"]),
            point=tuple(d["point"]),
            stage=d["stage"],
            target_label=d["target_label"],
            loss=float(d["loss"]),
            error_rate=float(d["error_rate"]),
            status=d["status"],
            wall_time=float(d.get("wall_time", 0.0)),
        )
        if t.stage not in STAGES or t.status not in STATUSES:
            raise ValueError(f"bad stage/status {t.stage!r}/{t.status!r}")
        if t.ok and not (math.isfinite(t.loss) and 0.0 <= t.error_rate <= 1.0):
            raise ValueError("ok trial with invalid loss or error rate")
        return t


class Ledger:
    """Append-only list of trials, optionally mirrored to a JSON-lines file."""

    def __init__(self, path: str | os.PathLike | None = None, trials: Iterable[Trial] = ()):
        self.path = Path(path) if path is not None else None
        self.trials: list[Trial] = list(trials)

    @classmethod
    def load(cls, path) -> "Ledger":
        path = Path(path)
        trials = []
        if path.exists():
            for lineno, line in enumerate(path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    t = Trial.from_json(line)
                except (ValueError, KeyError, TypeError) as exc:
                    raise LedgerError(path, lineno, str(exc)) from None
                if t.id != len(trials):
                    raise LedgerError(path, lineno, f"expected id {len(trials)}, found {t.id}")
                trials.append(t)
        return cls(path, trials)

    def __len__(self) -> int:
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def __getitem__(self, i):
        return self.trials[i]

    @property
    def next_id(self) -> int:
        return len(self.trials)

    def visited(self) -> set[ParamPoint]:
        return {t.point for t in self.trials}

    def ok_trials(self) -> list[Trial]:
        return [t for t in self.trials if t.ok]

    def append(self, trial: Trial) -> None:
        if trial.id != self.next_id:
            raise ValueError(f"trial id {trial.id} breaks the sequence (expected {self.next_id})")
        self.trials.append(trial)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(trial.to_json() + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def digest_lines(self) -> list[str]:
        """Records without wall time, for determinism comparisons."""
        return [t.to_json(wall_time=False) for t in self.trials]


@dataclass
class Outcome:
    """What an objective reports for one point."""

    loss: float
    error_rate: float
    status: str = "ok"
    artifact: object = None


Objective = Callable[[ParamPoint, int], Outcome]


@dataclass
class SearchConfig:
    random_iters: int = 47
    adaptive_iters: int = 53
    seed: int = 0
    objective_id: str = "desk-cnn"
    penalty_loss: float = DEFAULT_PENALTY
    gp: GPConfig = field(default_factory=GPConfig)

    def __post_init__(self):
        if self.random_iters < 2:
            raise ValueError("random_iters must be at least 2 (the surrogate needs 2 points)")
        if self.adaptive_iters < 0:
            raise ValueError("adaptive_iters must be non-negative")


def _rng(seed: int, trial_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial_id, stream])


def trial_seed(seed: int, trial_id: int) -> int:
    """Seed handed to the objective for one trial."""
    return int(_rng(seed, trial_id, 2).integers(2**31))


def _evaluate(objective: Objective, point, seed: int, trial_id: int, penalty: float) -> tuple[Outcome, float]:
    t0 = time.perf_counter()
    try:
        out = objective(point, trial_seed(seed, trial_id))
    except Exception as exc:  # noqa: BLE001 - a failed trial must not stop the search
        log.warning("trial %d at %s failed: %s", trial_id, point, exc)
        out = Outcome(penalty, 1.0, "failed")
    if out.status != "ok" or not math.isfinite(out.loss):
        out = Outcome(penalty, 1.0, "diverged" if out.status == "diverged" else "failed", out.artifact)
    return out, time.perf_counter() - t0


def _record(ledger, point, stage, label, outcome, wall, on_trial) -> Trial:
    trial = Trial(
        id=ledger.next_id,
        point=tuple(point),
        stage=stage,
        target_label=label,
        loss=float(outcome.loss),
        error_rate=float(outcome.error_rate),
        status=outcome.status,
        wall_time=round(wall, 3),
    )
    ledger.append(trial)
    log.info("trial %d %s %s loss=%.4f err=%.4f %s", trial.id, stage, trial.point,
             trial.loss, trial.error_rate, trial.status)
    if on_trial is not None:
        on_trial(trial, outcome.artifact)
    return trial


def _sample_unvisited(space: ParamSpace, rng, visited: set) -> ParamPoint:
    if len(visited) >= space.cardinality:
        raise SpaceExhausted("every point of the space has been evaluated")
    while True:
        p = space.sample(rng)
        if p not in visited:
            return p


def run_random(
    space: ParamSpace,
    objective: Objective,
    n: int,
    ledger: Ledger,
    seed: int = 0,
    penalty_loss: float = DEFAULT_PENALTY,
    on_trial=None,
) -> Ledger:
    """Append ``n`` trials at uniformly drawn, not yet evaluated points."""
    if n < 1:
        raise ValueError("n must be at least 1")
    visited = ledger.visited()
    for _ in range(n):
        tid = ledger.next_id
        point = _sample_unvisited(space, _rng(seed, tid, 0), visited)
        outcome, wall = _evaluate(objective, point, seed, tid, penalty_loss)
        _record(ledger, point, "random", None, outcome, wall, on_trial)
        visited.add(point)
    return ledger


_CANDIDATE_CACHE: dict[ParamSpace, CandidateSet] = {}


def candidate_set(space: ParamSpace, rng: np.random.Generator) -> CandidateSet:
    """Whole grid when it has at most 500,000 points, else a fresh 50,000-point sample."""
    if space in _CANDIDATE_CACHE:
        return _CANDIDATE_CACHE[space]
    try:
        cands = CandidateSet.full(space, FULL_ENUMERATION_MAX)
    except EnumerationRefused:
        return CandidateSet.sampled(space, rng, SAMPLED_CANDIDATES)
    _CANDIDATE_CACHE.clear()
    _CANDIDATE_CACHE[space] = cands
    return cands


_SCREEN_CACHE: list = []  # [(candidates, screen, screened candidates)]


def _screened(cands: CandidateSet, screen) -> CandidateSet:
    for source, fn, kept in _SCREEN_CACHE:
        if source is cands and fn == screen:
            return kept
    kept = CandidateSet.from_ranks(cands.space, cands.ranks[screen(cands.ranks)])
    _SCREEN_CACHE[:] = [(cands, screen, kept)]
    return kept


def adaptive_iterations_done(ledger: Ledger) -> int:
    return sum(1 for t in ledger if t.target_label is not None)


def fit_surrogate(space: ParamSpace, trials: list[Trial], gp: GPConfig, seed: int, trial_id: int):
    ok = [t for t in trials if t.ok]
    x = np.array([space.encode(t.point) for t in ok])
    y = np.array([t.loss for t in ok])
    cfg = GPConfig(**{**gp.__dict__, "seed": int(_rng(seed, trial_id, 1).integers(2**31))})
    return fit(x, y, cfg)


def run_adaptive(
    space: ParamSpace,
    objective: Objective,
    n: int,
    ledger: Ledger,
    seed: int = 0,
    penalty_loss: float = DEFAULT_PENALTY,
    gp: GPConfig | None = None,
    on_trial=None,
) -> Ledger:
    """Append up to ``n`` surrogate-guided trials.

    Each iteration refits the GP on all ok trials and proposes the argmax-PI
    unvisited candidate, alternating between the best-loss target and the
    25%-improvement target. A failed fit falls back to one random trial.
    Stops early, with a log message, if the space is exhausted.

    If the objective has a ``feasible_mask(ranks) -> bool array`` method,
    candidates it rejects are never proposed. Failed trials are left out of
    the fit, so without this screen the surrogate keeps seeing unexplored,
    high-variance regions where it already knows nothing can train.
    """
    gp = gp or GPConfig()
    screen = getattr(objective, "feasible_mask", None)
    if len(ledger.ok_trials()) < 2:
        raise ShortfallError("adaptive search needs at least 2 ok trials")
    visited = ledger.visited()
    for _ in range(n):
        tid = ledger.next_id
        iteration = adaptive_iterations_done(ledger) + 1
        best = min(t.loss for t in ledger.ok_trials())
        target = target_for_iteration(best, iteration)
        try:
            try:
                model = fit_surrogate(space, ledger.trials, gp, seed, tid)
            except FitError as exc:
                log.warning("surrogate fit failed at trial %d (%s); drawing at random", tid, exc)
                stage = "random"
                point = _sample_unvisited(space, _rng(seed, tid, 0), visited)
            else:
                stage = "adaptive"
                cands = candidate_set(space, _rng(seed, tid, 3))
                if screen is not None:
                    cands = _screened(cands, screen)
                point = propose(model, cands, target, visited)
        except SpaceExhausted as exc:
            log.info("stopping adaptive search: %s", exc)
            break
        outcome, wall = _evaluate(objective, point, seed, tid, penalty_loss)
        _record(ledger, point, stage, target.label, outcome, wall, on_trial)
        visited.add(point)
    return ledger


def run_search(
    space: ParamSpace,
    objective: Objective,
    config: SearchConfig,
    ledger: Ledger,
    on_trial=None,
    stop_after: int | None = None,
) -> Ledger:
    """Run (or continue) the two-stage search until the configured totals.

    ``stop_after`` caps the ledger length, which simulates an interruption.
    """
    total = config.random_iters + config.adaptive_iters
    limit = total if stop_after is None else min(total, stop_after)
    n_random = min(config.random_iters, limit) - min(len(ledger), config.random_iters)
    if n_random > 0:
        try:
            run_random(space, objective, n_random, ledger, config.seed, config.penalty_loss, on_trial)
        except SpaceExhausted as exc:
            log.info("stopping random search: %s", exc)
            return ledger
    n_adaptive = limit - max(len(ledger), config.random_iters)
    if n_adaptive > 0:
        if len(ledger.ok_trials()) < 2:
            log.warning("fewer than 2 ok trials after warm-up; continuing at random")
            run_random(space, objective, n_adaptive, ledger, config.seed, config.penalty_loss, on_trial)
        else:
            run_adaptive(space, objective, n_adaptive, ledger, config.seed,
                         config.penalty_loss, config.gp, on_trial)
    return ledger


def best_trials(ledger: Iterable[Trial], k: int) -> list[Trial]:
    """The ``k`` ok trials with the lowest loss, ties by lower id."""
    ok = [t for t in ledger if t.ok]
    if len(ok) < k:
        raise ShortfallError(f"requested top {k} trials but only {len(ok)} are ok")
    return sorted(ok, key=lambda t: (t.loss, t.id))[:k]


@dataclass
class RunningStats:
    min_loss: list[float]
    median_loss: list[float]
    min_error: list[float]


def running_stats(ledger: Iterable[Trial]) -> RunningStats:
    """Prefix min/median of loss and prefix min of error over all trials."""
    trials = list(ledger)
    if not trials:
        raise ValueError("ledger is empty")
    losses, mins, meds, errs = [], [], [], []
    for t in trials:
        losses.append(t.loss)
        mins.append(min(mins[-1], t.loss) if mins else t.loss)
        meds.append(statistics.median(losses))
        errs.append(min(errs[-1], t.error_rate) if errs else t.error_rate)
    return RunningStats(mins, meds, errs)
