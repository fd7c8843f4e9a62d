"""Synthetic slice/volume image corpus with a volume-wise stratified split.

Four shape families stand in for four anatomical regions. Each volume has
its own style (intensity, contrast, size, orientation, noise) and its slices
vary smoothly along the stack, so slices of a volume are strongly correlated.
The first and last slice of each volume are rendered at half contrast.

Directory format written by :func:`save`::

    manifest.json   {"side": 16, "classes": ["A", "B", "C", "D"],
                     "fractions": [0.5, 0.25, 0.25],
                     "volumes": [{"id": 0, "label": 0, "split": "train",
                                  "slices": ["slices/v0000_s000.f32", ...]}, ...]}
    slices/*.f32    side*side little-endian float32, row-major, values in [0, 1]
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

CLASS_NAMES = ("A", "B", "C", "D")
SHAPES = ("ellipse", "cross", "ring", "bar")
SPLITS = ("train", "validation", "test")
FRACTIONS = (0.5, 0.25, 0.25)


class StratificationError(ValueError):
    """Too few volumes of some class to split."""


@dataclass
class Volume:
    id: int
    label: int
    slices: np.ndarray  # (n_slices, side, side)

    @property
    def slice_count(self) -> int:
        return len(self.slices)


@dataclass
class GenConfig:
    volumes_per_class: tuple[int, ...] = (8, 8, 8, 8)
    slice_range: tuple[int, int] = (10, 20)
    # slice-count multiplier per class; class A is the majority (~30% of slices)
    slice_weights: tuple[float, ...] = (1.3, 1.0, 1.0, 1.0)
    side: int = 16
    seed: int = 0
    fractions: tuple[float, ...] = FRACTIONS

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class SliceDataset:
    volumes: list[Volume]
    split: dict[int, str]
    side: int
    num_classes: int = 4
    fractions: tuple[float, ...] = FRACTIONS
    _arrays: dict = field(default_factory=dict, repr=False, compare=False)

    def volumes_in(self, split: str) -> list[Volume]:
        return [v for v in self.volumes if self.split[v.id] == split]

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked slices, labels, and owning volume ids for one split."""
        if split not in self._arrays:
            vols = self.volumes_in(split)
            if vols:
                x = np.concatenate([v.slices for v in vols]).astype(np.float32)
                y = np.concatenate([np.full(v.slice_count, v.label) for v in vols])
                ids = np.concatenate([np.full(v.slice_count, v.id) for v in vols])
            else:
                x = np.zeros((0, self.side, self.side), np.float32)
                y = ids = np.zeros(0, dtype=np.int64)
            self._arrays[split] = (x, y.astype(np.int64), ids.astype(np.int64))
        return self._arrays[split]

    @property
    def class_weights(self) -> np.ndarray:
        """``N / (K * N_c)`` over training slices."""
        _, y, _ = self.arrays("train")
        counts = np.bincount(y, minlength=self.num_classes).astype(float)
        if np.any(counts == 0):
            raise ValueError("every class needs training slices")
        return len(y) / (self.num_classes * counts)


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    """Integer counts summing to ``n``; leftover units go to the largest
    remainders, ties to the earlier split."""
    quotas = [n * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(volumes: Sequence[Volume], fractions=FRACTIONS, seed: int = 0) -> dict[int, str]:
    """Assign whole volumes to splits, per class, by largest-remainder counts.

    Volumes of each class are sorted by id and shuffled with ``seed`` before
    the first counts go to train, the next to validation, the rest to test.
    """
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must sum to 1")
    rng = np.random.default_rng(seed)
    labels = sorted({v.label for v in volumes})
    assignment = {}
    for label in labels:
        ids = sorted(v.id for v in volumes if v.label == label)
        if len(ids) < 3:
            raise StratificationError(f"class {label} has {len(ids)} volumes; at least 3 are needed")
        ids = [ids[i] for i in rng.permutation(len(ids))]
        start = 0
        for name, k in zip(SPLITS, largest_remainder(len(ids), fractions)):
            for vid in ids[start:start + k]:
                assignment[vid] = name
            start += k
    return assignment


def _shape_mask(kind: str, u: np.ndarray, v: np.ndarray, radius: float, thick: float, aspect: float) -> np.ndarray:
    """Soft (anti-aliased) coverage of one shape in rotated pixel coordinates."""
    if kind == "ellipse":
        d = (np.hypot(u / radius, v / (radius * aspect)) - 1.0) * radius * aspect
    elif kind == "ring":
        rr = np.hypot(u, v / aspect)
        d = np.abs(rr - 0.75 * radius) - thick
    elif kind == "cross":
        arm1 = np.maximum(np.abs(u) - radius, np.abs(v) - thick)
        arm2 = np.maximum(np.abs(v) - radius, np.abs(u) - thick)
        d = np.minimum(arm1, arm2)
    elif kind == "bar":
        d = np.maximum(np.abs(u) - radius, np.abs(v) - thick)
    else:
        raise ValueError(kind)
    return np.clip(0.5 - d, 0.0, 1.0)


def render_volume(label: int, n_slices: int, side: int, rng: np.random.Generator) -> np.ndarray:
    kind = SHAPES[label]
    bg = rng.uniform(0.05, 0.35)
    contrast = rng.uniform(0.3, 0.6)
    radius0 = rng.uniform(0.3, 0.45) * side
    thick0 = rng.uniform(0.08, 0.16) * side
    aspect = rng.uniform(0.6, 1.0)
    angle0 = rng.uniform(0, math.pi)
    spin = rng.uniform(-0.5, 0.5) * math.pi  # total rotation across the stack
    center = side / 2 - 0.5 + rng.uniform(-0.1, 0.1, size=2) * side
    noise = rng.uniform(0.03, 0.10)
    gradient = rng.uniform(-0.15, 0.15, size=2)

    yy, xx = np.mgrid[0:side, 0:side].astype(float)
    shade = bg + gradient[0] * (yy / side - 0.5) + gradient[1] * (xx / side - 0.5)
    out = np.empty((n_slices, side, side))
    for k in range(n_slices):
        t = (k + 0.5) / n_slices
        profile = 0.6 + 0.4 * math.sin(math.pi * t)
        radius = radius0 * profile * rng.uniform(0.95, 1.05)
        thick = thick0 * rng.uniform(0.9, 1.1)
        angle = angle0 + spin * t + rng.normal(0, 0.08)
        cy, cx = center + rng.normal(0, 0.3, size=2)
        ca, sa = math.cos(angle), math.sin(angle)
        u = ca * (xx - cx) + sa * (yy - cy)
        v = -sa * (xx - cx) + ca * (yy - cy)
        mask = _shape_mask(kind, u, v, radius, thick, aspect)
        c = contrast * (0.5 if k in (0, n_slices - 1) else 1.0)
        img = shade + c * mask + rng.normal(0, noise, size=(side, side))
        out[k] = np.clip(img, 0.0, 1.0)
    return out.astype(np.float32)


def slice_counts(cfg: GenConfig, label: int, n: int, rng: np.random.Generator) -> list[int]:
    lo, hi = cfg.slice_range
    base = np.rint(np.linspace(lo, hi, n)) if n > 1 else np.array([(lo + hi) / 2])
    counts = np.maximum(np.rint(base * cfg.slice_weights[label]), 1).astype(int)
    return [int(c) for c in rng.permutation(counts)]


def generate(cfg: GenConfig | None = None) -> SliceDataset:
    cfg = cfg or GenConfig()
    k = len(cfg.volumes_per_class)
    if k > len(SHAPES):
        raise ValueError(f"at most {len(SHAPES)} classes are supported")
    if cfg.side < 4 or cfg.side & (cfg.side - 1):
        raise ValueError("side must be a power of 2 (at least 4)")
    if min(cfg.volumes_per_class) < 4:
        raise StratificationError("each class needs at least 4 volumes")
    rng = np.random.default_rng(cfg.seed)
    volumes = []
    for label, n in enumerate(cfg.volumes_per_class):
        for count in slice_counts(cfg, label, n, rng):
            vid = len(volumes)
            vrng = np.random.default_rng([cfg.seed, vid])
            volumes.append(Volume(vid, label, render_volume(label, count, cfg.side, vrng)))
    split = stratified_split(volumes, cfg.fractions, cfg.seed)
    return SliceDataset(volumes, split, cfg.side, k, tuple(cfg.fractions))


def save(ds: SliceDataset, path) -> None:
    root = Path(path)
    (root / "slices").mkdir(parents=True, exist_ok=True)
    entries = []
    for v in ds.volumes:
        files = []
        for i, s in enumerate(v.slices):
            name = f"slices/v{v.id:04d}_s{i:03d}.f32"
            (root / name).write_bytes(np.ascontiguousarray(s, dtype="<f4").tobytes())
            files.append(name)
        entries.append({"id": v.id, "label": v.label, "split": ds.split[v.id], "slices": files})
    manifest = {
        "side": ds.side,
        "classes": list(CLASS_NAMES[: ds.num_classes]),
        "fractions": list(ds.fractions),
        "volumes": entries,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load(path) -> SliceDataset:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text())
    side = manifest["side"]
    volumes, split = [], {}
    for e in manifest["volumes"]:
        slices = np.stack([
            np.frombuffer((root / f).read_bytes(), dtype="<f4").reshape(side, side)
            for f in e["slices"]
        ]).astype(np.float32)
        volumes.append(Volume(e["id"], e["label"], slices))
        split[e["id"]] = e["split"]
    return SliceDataset(volumes, split, side, len(manifest["classes"]),
                        tuple(manifest.get("fractions", FRACTIONS)))
