"""Glue between the search loop and the classifier: the training objective,
the best-k weight cache, and report generation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ensemble as ens_mod
from .datagen import SliceDataset
from .nnet import io as nnet_io
from .nnet.model import DESK, CapExceededError, Preset, SpatialCollapseError, TrainedNet, build, check
from .nnet.train import TrainParams, train
from .optimizer import Ledger, Outcome, Trial, best_trials, running_stats, trial_seed
from .space import BASELINE_POINT, ParamSpace, default_space

log = logging.getLogger(__name__)

DEFAULT_MAX_TRAIN_MACS = 3e11


@dataclass
class Caps:
    """Desk-scale resource limits standing in for memory/time budgets."""

    max_params: int | None = 2_000_000
    # forward multiply-accumulates per image times images seen in training
    max_train_macs: float | None = DEFAULT_MAX_TRAIN_MACS


def train_macs(spec, tp: TrainParams, n_train: int) -> float:
    return float(spec.forward_macs()) * tp.epochs * tp.samples_per_epoch(n_train)


class CnnObjective:
    """Train the network encoded by a point; report validation loss and error."""

    def __init__(self, dataset: SliceDataset, space: ParamSpace | None = None,
                 preset: Preset = DESK, caps: Caps | None = None):
        self.dataset = dataset
        self.space = space or default_space()
        self.preset = Preset(preset.name, dataset.side, preset.fc_widths, preset.max_params)
        self.caps = caps or Caps()

    # dimensions that cannot make a point fail before training
    TRAINING_ONLY = ("l", "a")

    def plan(self, point, seed: int = 0):
        """Network spec and training settings; raises if the point is infeasible."""
        spec = build(point, self.preset, self.space, self.dataset.num_classes)
        check(spec, self.caps.max_params)
        tp = TrainParams.from_point(point, self.space, seed)
        cost = train_macs(spec, tp, len(self.dataset.arrays("train")[1]))
        if self.caps.max_train_macs is not None and cost > self.caps.max_train_macs:
            raise CapExceededError(f"training needs {cost:.3g} MACs, cap is {self.caps.max_train_macs:.3g}")
        return spec, tp

    def feasible(self, point) -> bool:
        try:
            self.plan(point)
        except (SpatialCollapseError, CapExceededError):
            return False
        return True

    def feasible_mask(self, ranks: np.ndarray) -> np.ndarray:
        """Feasibility of each rank row, checking each distinct structure once."""
        ranks = np.asarray(ranks)
        key = ranks.copy()
        for i, name in enumerate(self.space.names):
            if name in self.TRAINING_ONLY:
                key[:, i] = 0
        uniq, inverse = np.unique(key, axis=0, return_inverse=True)
        ok = np.array([self.feasible(self.space.from_ranks(r)) for r in uniq], dtype=bool)
        return ok[inverse.reshape(-1)]

    def fit(self, point, seed: int) -> TrainedNet:
        spec, tp = self.plan(point, seed)
        x_tr, y_tr, _ = self.dataset.arrays("train")
        x_va, y_va, _ = self.dataset.arrays("validation")
        return train(spec, x_tr, y_tr, x_va, y_va, self.dataset.class_weights, tp)

    def __call__(self, point, seed: int) -> Outcome:
        net = self.fit(point, seed)
        m = net.metrics
        return Outcome(m["val_loss"], m["val_error"], m["status"], net)


def baseline_point(side: int, space: ParamSpace | None = None) -> tuple:
    """The handcrafted baseline, with blocks reduced to what ``side`` allows."""
    space = space or default_space()
    point = list(BASELINE_POINT)
    max_blocks = int(math.log2(side))
    point[0] = min(point[0], max_blocks)
    return space.validate(point)


class MemberCache:
    """Keeps weight files for the current top-k ok trials only."""

    def __init__(self, directory, ledger: Ledger, k: int):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.ledger = ledger
        self.k = k

    @staticmethod
    def filename(trial_id: int, spec_hash: str) -> str:
        return f"trial_{trial_id:04d}_{spec_hash}.bin"

    def path_for(self, trial_id: int) -> Path | None:
        hits = sorted(self.dir.glob(f"trial_{trial_id:04d}_*.bin"))
        return hits[0] if hits else None

    def __call__(self, trial: Trial, net) -> None:
        ok = self.ledger.ok_trials()
        top = {t.id for t in sorted(ok, key=lambda t: (t.loss, t.id))[: self.k]}
        if trial.ok and trial.id in top and net is not None:
            nnet_io.save(net, self.dir / self.filename(trial.id, net.spec.hash()))
        for f in self.dir.glob("trial_*.bin"):
            if int(f.name.split("_")[1]) not in top:
                f.unlink()

    def load_or_train(self, trial: Trial, objective: CnnObjective, seed: int) -> TrainedNet:
        path = self.path_for(trial.id)
        if path is not None:
            return nnet_io.load(path)
        log.info("retraining trial %d (no cached weights)", trial.id)
        net = objective.fit(trial.point, trial_seed(seed, trial.id))
        nnet_io.save(net, self.dir / self.filename(trial.id, net.spec.hash()))
        return net


def localization_track(dataset: SliceDataset, split: str = "test"):
    """One volume per class from ``split``, stacked in class order."""
    chosen = []
    for label in range(dataset.num_classes):
        vols = [v for v in dataset.volumes_in(split) if v.label == label]
        if vols:
            chosen.append(vols[0])
    images = np.concatenate([v.slices for v in chosen])
    truth = [v.label for v in chosen for _ in range(v.slice_count)]
    return images, truth


def write_report(ledger: Ledger, dataset: SliceDataset, objective: CnnObjective,
                 cache: MemberCache, out_dir, k: int, seed: int) -> dict:
    """Write the four report tables; return headline numbers."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    top = best_trials(ledger, k)
    space = objective.space

    stats = running_stats(ledger)
    lines = ["iteration\tstage\tloss\terror_rate\tstatus\trunning_min_loss\trunning_median_loss\trunning_min_error"]
    for i, t in enumerate(ledger):
        lines.append(
            f"{t.id}\t{t.stage}\t{t.loss:.6f}\t{t.error_rate:.6f}\t{t.status}\t"
            f"{stats.min_loss[i]:.6f}\t{stats.median_loss[i]:.6f}\t{stats.min_error[i]:.6f}"
        )
    (out / "running_stats.tsv").write_text("\n".join(lines) + "\n")

    lines = ["rank\ttrial\tloss\terror_rate\t" + "\t".join(space.names) + "\tarchitecture"]
    for rank, t in enumerate(top, 1):
        spec = build(t.point, objective.preset, space, dataset.num_classes)
        vals = "\t".join(str(v) for v in t.point)
        lines.append(f"{rank}\t{t.id}\t{t.loss:.6f}\t{t.error_rate:.6f}\t{vals}\t{spec.describe()}")
    (out / "top_trials.tsv").write_text("\n".join(lines) + "\n")

    members = [cache.load_or_train(t, objective, seed) for t in top]
    ensemble = ens_mod.Ensemble(members)
    base_net = objective.fit(baseline_point(dataset.side, space), seed)
    baseline = ens_mod.Ensemble([base_net])
    name = "ensemble" if k > 1 else "best"
    cms = {
        (model, level): ens_mod.confusion(e, dataset, "test", level)
        for model, e in (("baseline", baseline), (name, ensemble))
        for level in ("slice", "volume")
    }
    ens_mod.write_confusion_table(out / "confusion.tsv", [(m, cm) for (m, _), cm in cms.items()])

    images, truth = localization_track(dataset)
    ens_mod.write_localization_table(out / "localization.tsv", ensemble.predict_proba(images), truth)

    return {
        "baseline_slice_error": cms["baseline", "slice"].error_rate,
        "baseline_volume_error": cms["baseline", "volume"].error_rate,
        "ensemble_slice_error": cms[name, "slice"].error_rate,
        "ensemble_volume_error": cms[name, "volume"].error_rate,
        "member_val_errors": [t.error_rate for t in top],
    }
