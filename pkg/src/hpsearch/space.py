"""Discrete hyper-parameter search space.

A space is an ordered list of dimensions, each holding a finite ordered list
of admissible raw settings. A point is a plain tuple with one raw setting per
dimension. Points are mapped to ``[0, 1]^d`` by rank for the surrogate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

KINDS = (
    "integer-range",
    "integer-exponent-base2",
    "integer-exponent-base10",
    "integer-multiple",
    "categorical",
)

ParamPoint = tuple


class InvalidPointError(ValueError):
    """Raised when a point does not belong to a space."""

    def __init__(self, dim: str, value: Any):
        super().__init__(f"value {value!r} is not admissible for dimension {dim!r}")
        self.dim = dim
        self.value = value


class EnumerationRefused(RuntimeError):
    """Raised when a space is too large to enumerate under the given cap."""


@dataclass(frozen=True)
class ParamDim:
    name: str
    kind: str
    raw_values: tuple
    multiplier: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r} for dimension {self.name!r}")
        values = tuple(self.raw_values)
        object.__setattr__(self, "raw_values", values)
        if not values:
            raise ValueError(f"dimension {self.name!r} has no values")
        if len(set(values)) != len(values):
            raise ValueError(f"dimension {self.name!r} has duplicate values")
        if self.kind != "categorical" and list(values) != sorted(values):
            raise ValueError(f"dimension {self.name!r} values must be increasing")

    @property
    def count(self) -> int:
        return len(self.raw_values)

    def rank(self, value) -> int:
        try:
            return self.raw_values.index(value)
        except ValueError:
            raise InvalidPointError(self.name, value) from None

    def derived(self, value):
        """Value actually used downstream, e.g. ``2**r`` filters."""
        if self.kind == "integer-exponent-base2":
            return 2**value
        if self.kind == "integer-exponent-base10":
            return 10.0**value
        if self.kind == "integer-multiple":
            return self.multiplier * value
        return value


@dataclass(frozen=True)
class ParamSpace:
    dims: tuple[ParamDim, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")

    def __len__(self) -> int:
        return len(self.dims)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(d.count for d in self.dims)

    @property
    def cardinality(self) -> int:
        n = 1
        for c in self.counts:
            n *= c
        return n

    def dim(self, name: str) -> ParamDim:
        for d in self.dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def validate(self, point: Sequence) -> ParamPoint:
        if len(point) != len(self.dims):
            raise ValueError(f"point has {len(point)} values, space has {len(self.dims)} dims")
        for d, v in zip(self.dims, point):
            d.rank(v)
        return tuple(point)

    def ranks(self, point: Sequence) -> tuple[int, ...]:
        if len(point) != len(self.dims):
            raise ValueError(f"point has {len(point)} values, space has {len(self.dims)} dims")
        return tuple(d.rank(v) for d, v in zip(self.dims, point))

    def from_ranks(self, ranks: Sequence[int]) -> ParamPoint:
        return tuple(d.raw_values[int(i)] for d, i in zip(self.dims, ranks))

    def flat_index(self, point: Sequence) -> int:
        """Position of ``point`` in lexicographic enumeration order."""
        return int(np.ravel_multi_index(self.ranks(point), self.counts))

    def sort_key(self, point: Sequence) -> tuple[int, ...]:
        return self.ranks(point)

    def derived(self, point: Sequence) -> dict[str, Any]:
        """Map dimension names to derived settings (filters, learning rate, ...)."""
        self.validate(point)
        return {d.name: d.derived(v) for d, v in zip(self.dims, point)}

    def sample(self, rng: np.random.Generator) -> ParamPoint:
        """Draw each dimension independently and uniformly."""
        return tuple(d.raw_values[int(rng.integers(d.count))] for d in self.dims)

    def encode(self, point: Sequence) -> np.ndarray:
        return self.encode_ranks(np.asarray(self.ranks(point)))

    def encode_ranks(self, ranks: np.ndarray) -> np.ndarray:
        """Rank / (count - 1) per dimension; singleton dims map to 0."""
        denom = np.array([max(c - 1, 1) for c in self.counts], dtype=float)
        return np.asarray(ranks, dtype=float) / denom

    def decode(self, coords: Sequence[float]) -> ParamPoint:
        """Nearest-rank inverse of :meth:`encode`."""
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (len(self.dims),):
            raise ValueError(f"expected {len(self.dims)} coordinates, got shape {coords.shape}")
        ranks = [
            int(np.clip(np.rint(x * (c - 1)), 0, c - 1)) if c > 1 else 0
            for x, c in zip(coords, self.counts)
        ]
        return self.from_ranks(ranks)

    def rank_grid(self, max_points: int) -> np.ndarray:
        """All rank tuples as an ``(N, d)`` int array in lexicographic order."""
        n = self.cardinality
        if n > max_points:
            raise EnumerationRefused(
                f"space has {n} points, more than the enumeration cap of {max_points}"
            )
        if not self.dims:
            return np.zeros((1, 0), dtype=np.int64)
        grid = np.indices(self.counts, dtype=np.int64)
        return grid.reshape(len(self.dims), -1).T

    def enumerate(self, max_points: int) -> list[ParamPoint]:
        return [self.from_ranks(r) for r in self.rank_grid(max_points)]

    def iter_points(self) -> Iterator[ParamPoint]:
        for r in np.ndindex(*self.counts):
            yield self.from_ranks(r)

    def to_dict(self) -> dict:
        out = []
        for d in self.dims:
            item = {"name": d.name, "kind": d.kind, "values": list(d.raw_values)}
            if d.kind == "integer-multiple":
                item["multiplier"] = d.multiplier
            out.append(item)
        return {"dims": out}

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSpace":
        dims = []
        for item in data["dims"]:
            values = item["values"]
            if isinstance(values, dict):
                # {"min": 1, "max": 5} shorthand for integer grids
                values = list(range(values["min"], values["max"] + 1))
            dims.append(
                ParamDim(
                    name=item["name"],
                    kind=item["kind"],
                    raw_values=tuple(values),
                    multiplier=int(item.get("multiplier", 1)),
                )
            )
        return cls(tuple(dims))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ParamSpace":
        return cls.from_dict(json.loads(Path(path).read_text()))


BASELINE_POINT: ParamPoint = (5, 1, 6, 3, -3, 3, 7, "Yes")


def default_space() -> ParamSpace:
    """The 8-dimensional architecture/training grid (470,400 points).

    ======  =======================  =============================
    name    raw values               derived setting
    ======  =======================  =============================
    b       1..5                     convolution sections
    c       1..7                     conv layers per section
    r       2..7                     filters per layer = 2**r
    s       3, 5                     filter side
    l       -7..0                    learning rate = 10**l
    a       2..8                     batch size = 2**a
    e       1..10                    epochs = 10*e
    g       No, Yes                  data augmentation
    ======  =======================  =============================
    """
    return ParamSpace(
        (
            ParamDim("b", "integer-range", tuple(range(1, 6))),
            ParamDim("c", "integer-range", tuple(range(1, 8))),
            ParamDim("r", "integer-exponent-base2", tuple(range(2, 8))),
            ParamDim("s", "integer-range", (3, 5)),
            ParamDim("l", "integer-exponent-base10", tuple(range(-7, 1))),
            ParamDim("a", "integer-exponent-base2", tuple(range(2, 9))),
            ParamDim("e", "integer-multiple", tuple(range(1, 11)), multiplier=10),
            ParamDim("g", "categorical", ("No", "Yes")),
        )
    )


def cardinality(space: ParamSpace) -> int:
    return space.cardinality


def sample_uniform(space: ParamSpace, rng: np.random.Generator) -> ParamPoint:
    return space.sample(rng)


def encode(space: ParamSpace, point: Sequence) -> np.ndarray:
    return space.encode(point)


def enumerate_points(space: ParamSpace, max_points: int) -> list[ParamPoint]:
    return space.enumerate(max_points)
