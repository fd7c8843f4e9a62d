"""Top-k ensembles: prediction averaging, volume votes, confusion matrices,
and cutoff-based slice-by-slice localization.

Members are any objects with ``predict_proba(images) -> (n, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen import CLASS_NAMES, SliceDataset, Volume

DEFAULT_CUTOFF = 0.7


class Ensemble:
    def __init__(self, members: Sequence):
        if not members:
            raise ValueError("an ensemble needs at least one member")
        self.members = list(members)

    def __len__(self) -> int:
        return len(self.members)

    def predict_proba(self, images) -> np.ndarray:
        """Unweighted mean of member probabilities."""
        images = np.asarray(images)
        single = images.ndim == 2
        batch = images[None] if single else images
        probs = [np.asarray(m.predict_proba(batch), dtype=float) for m in self.members]
        shapes = {p.shape for p in probs}
        if len(shapes) != 1:
            raise ValueError(f"members disagree on output shape: {sorted(shapes)}")
        out = np.mean(probs, axis=0)
        return out[0] if single else out


def predict_ensemble(ens: Ensemble, image) -> np.ndarray:
    return ens.predict_proba(image)


def vote(probs: np.ndarray) -> int:
    """Majority vote of per-slice argmax labels.

    Ties go to the tied class with the larger mean probability, then to the
    lowest class index.
    """
    probs = np.asarray(probs, dtype=float)
    if len(probs) == 0:
        raise ValueError("cannot vote on an empty volume")
    counts = np.bincount(probs.argmax(axis=1), minlength=probs.shape[1])
    tied = np.flatnonzero(counts == counts.max())
    mean = probs.mean(axis=0)
    return int(tied[np.argmax(mean[tied])])


def classify_volume(ens: Ensemble, vol: Volume) -> int:
    return vote(ens.predict_proba(vol.slices))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted
    level: str

    @property
    def error_rate(self) -> float:
        total = self.counts.sum()
        return float(1.0 - np.trace(self.counts) / total) if total else 0.0

    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_rows(self, name: str = "") -> list[str]:
        k = len(self.counts)
        lines = []
        for t in range(k):
            cells = "\t".join(str(int(c)) for c in self.counts[t])
            lines.append(f"{name}\t{self.level}\t{CLASS_NAMES[t]}\t{cells}")
        return lines


def tally(true_labels, predicted, num_classes: int, level: str) -> ConfusionMatrix:
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(true_labels), np.asarray(predicted)), 1)
    return ConfusionMatrix(counts, level)


def confusion(ens: Ensemble, ds: SliceDataset, split: str = "test", level: str = "slice") -> ConfusionMatrix:
    vols = ds.volumes_in(split)
    if not vols:
        raise ValueError(f"split {split!r} is empty")
    truth, pred = [], []
    for v in vols:
        probs = ens.predict_proba(v.slices)
        if level == "slice":
            truth += [v.label] * v.slice_count
            pred += list(probs.argmax(axis=1))
        elif level == "volume":
            truth.append(v.label)
            pred.append(vote(probs))
        else:
            raise ValueError(f"unknown level {level!r}")
    return tally(truth, pred, ds.num_classes, level)


def decide(probs: np.ndarray, cutoff: float = DEFAULT_CUTOFF) -> list[int | None]:
    """Per row, the class whose probability is strictly above ``cutoff``, else None."""
    if not 0.25 < cutoff < 1:
        raise ValueError("cutoff must lie in (0.25, 1)")
    out: list[int | None] = []
    for row in np.asarray(probs, dtype=float):
        above = np.flatnonzero(row > cutoff)
        out.append(int(above[0]) if len(above) == 1 else None)
    return out


def localize(ens: Ensemble, vol: Volume, cutoff: float = DEFAULT_CUTOFF) -> list[int | None]:
    return decide(ens.predict_proba(vol.slices), cutoff)


def runs(decisions: Sequence[int | None]) -> list[tuple[int, int, int | None]]:
    """Maximal runs of equal decisions as ``(start, stop_exclusive, class)``."""
    out = []
    start = 0
    for i in range(1, len(decisions) + 1):
        if i == len(decisions) or decisions[i] != decisions[start]:
            out.append((start, i, decisions[start]))
            start = i
    return out


def write_confusion_table(path, matrices: Sequence[tuple[str, ConfusionMatrix]]) -> None:
    """TSV of ``(model name, matrix)`` pairs followed by their error rates."""
    matrices = list(matrices)
    k = len(matrices[0][1].counts)
    header = "model\tlevel\ttrue\t" + "\t".join(f"pred_{CLASS_NAMES[i]}" for i in range(k))
    lines = [header]
    for name, cm in matrices:
        lines += cm.to_rows(name)
    lines.append("")
    lines.append("model\tlevel\terror_rate")
    lines += [f"{name}\t{cm.level}\t{cm.error_rate:.6f}" for name, cm in matrices]
    Path(path).write_text("\n".join(lines) + "\n")


def write_localization_table(path, probs: np.ndarray, truth: Sequence[int], cutoff: float = DEFAULT_CUTOFF) -> None:
    decisions = decide(probs, cutoff)
    k = probs.shape[1]
    lines = ["slice\ttrue\tdecision\t" + "\t".join(f"p_{CLASS_NAMES[i]}" for i in range(k))]
    for i, (row, d) in enumerate(zip(probs, decisions)):
        label = CLASS_NAMES[d] if d is not None else "-"
        lines.append(f"{i}\t{CLASS_NAMES[truth[i]]}\t{label}\t" + "\t".join(f"{p:.4f}" for p in row))
    lines.append("")
    lines.append("start\tstop\tdecision")
    for a, b, d in runs(decisions):
        lines.append(f"{a}\t{b}\t{CLASS_NAMES[d] if d is not None else '-'}")
    Path(path).write_text("\n".join(lines) + "\n")
