"""Parametric convolutional classifier: architecture, initialization, inference."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from ..space import ParamSpace, default_space
from . import layers as L


class ArchitectureError(ValueError):
    """A point does not give a buildable network."""


class SpatialCollapseError(ArchitectureError):
    pass


class CapExceededError(ArchitectureError):
    pass


@dataclass(frozen=True)
class Preset:
    name: str
    input_side: int
    fc_widths: tuple[int, ...]
    max_params: int | None


DESK = Preset("desk", 16, (128, 64), 2_000_000)
PAPER = Preset("paper", 64, (4096, 1024), None)
PRESETS = {"desk": DESK, "paper": PAPER}


@dataclass(frozen=True)
class NetSpec:
    input_side: int
    blocks: int
    convs_per_block: int
    filters: int
    filter_size: int
    fc_widths: tuple[int, ...] = (128, 64)
    num_classes: int = 4
    channels: int = 1

    @property
    def output_side(self) -> int:
        return self.input_side >> self.blocks

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fc_widths"] = list(self.fc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        return cls(**{**d, "fc_widths": tuple(d["fc_widths"])})

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def param_shapes(self) -> list[tuple[int, ...]]:
        """Weight/bias shapes in declaration order."""
        shapes = []
        cin = self.channels
        s = self.filter_size
        for _ in range(self.blocks * self.convs_per_block):
            shapes += [(s, s, cin, self.filters), (self.filters,)]
            cin = self.filters
        width = self.output_side**2 * self.filters
        for units in (*self.fc_widths, self.num_classes):
            shapes += [(width, units), (units,)]
            width = units
        return shapes

    def param_count(self) -> int:
        """Closed-form trainable parameter count."""
        s2 = self.filter_size**2
        f = self.filters
        n_conv = self.blocks * self.convs_per_block
        total = s2 * self.channels * f + f + (n_conv - 1) * (s2 * f * f + f)
        width = self.output_side**2 * f
        for units in (*self.fc_widths, self.num_classes):
            total += width * units + units
            width = units
        return total

    def forward_macs(self) -> int:
        """Multiply-accumulates for one forward pass of one image."""
        side = self.input_side
        s2 = self.filter_size**2
        f = self.filters
        cin = self.channels
        macs = 0
        for _ in range(self.blocks):
            for _ in range(self.convs_per_block):
                macs += side * side * s2 * cin * f
                cin = f
            side //= 2
        width = side * side * f
        for units in (*self.fc_widths, self.num_classes):
            macs += width * units
            width = units
        return macs

    def describe(self) -> str:
        """One-line text rendering of the layer stack."""
        conv = f"{self.convs_per_block}x conv{self.filter_size}x{self.filter_size}-{self.filters}"
        blocks = " | ".join([f"[{conv} relu, pool]"] * self.blocks)
        fc = " ".join(f"fc{u} relu" for u in self.fc_widths)
        return f"in{self.input_side} {blocks} {fc} softmax{self.num_classes}"


def build(point: Sequence, preset: Preset | str = DESK, space: ParamSpace | None = None,
          num_classes: int = 4) -> NetSpec:
    """Materialize the architecture encoded by ``point``."""
    space = space or default_space()
    if isinstance(preset, str):
        preset = PRESETS[preset]
    hp = space.derived(point)
    spec = NetSpec(
        input_side=preset.input_side,
        blocks=int(hp["b"]),
        convs_per_block=int(hp["c"]),
        filters=int(hp["r"]),
        filter_size=int(hp["s"]),
        fc_widths=preset.fc_widths,
        num_classes=num_classes,
    )
    check(spec, preset.max_params)
    return spec


def check(spec: NetSpec, max_params: int | None = None) -> None:
    if spec.input_side < 2**spec.blocks:
        raise SpatialCollapseError(
            f"{spec.blocks} poolings collapse a {spec.input_side}px input below 1x1"
        )
    if max_params is not None and spec.param_count() > max_params:
        raise CapExceededError(
            f"{spec.param_count()} parameters exceed the cap of {max_params}"
        )


def init_params(spec: NetSpec, rng: np.random.Generator, dtype=np.float32) -> list[np.ndarray]:
    """He-style uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    params = []
    for shape in spec.param_shapes():
        if len(shape) == 1:
            params.append(np.zeros(shape, dtype=dtype))
        else:
            fan_in = int(np.prod(shape[:-1]))
            bound = np.sqrt(6.0 / fan_in)
            params.append(rng.uniform(-bound, bound, size=shape).astype(dtype))
    return params


class Network:
    """Forward and backward passes of a :class:`NetSpec` over given parameters."""

    def __init__(self, spec: NetSpec, params: list[np.ndarray]):
        self.spec = spec
        self.params = params
        self.n_conv = spec.blocks * spec.convs_per_block

    def _prepare(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=self.params[0].dtype)
        side = self.spec.input_side
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1:] != (side, side, self.spec.channels):
            raise ValueError(f"expected images of shape ({side}, {side}), got {x.shape[1:]}")
        return x

    def forward(self, images: np.ndarray, keep: bool = False):
        x = self._prepare(images)
        caches = []
        p = self.params
        k = 0
        for _ in range(self.spec.blocks):
            for _ in range(self.spec.convs_per_block):
                x, cc = L.conv_forward(x, p[k], p[k + 1])
                x, rc = L.relu_forward(x)
                if keep:
                    caches.append((cc, rc))
                k += 2
            x, pc = L.pool_forward(x)
            if keep:
                caches.append(pc)
        flat_shape = x.shape
        x = x.reshape(len(x), -1)
        n_fc = len(self.spec.fc_widths)
        for i in range(n_fc + 1):
            x, dc = L.dense_forward(x, p[k], p[k + 1])
            rc = None
            if i < n_fc:
                x, rc = L.relu_forward(x)
            if keep:
                caches.append((dc, rc))
            k += 2
        return x, (caches, flat_shape)

    def backward(self, dlogits: np.ndarray, state) -> list[np.ndarray]:
        caches, flat_shape = state
        p = self.params
        grads: list[np.ndarray] = [None] * len(p)
        k = len(p)
        ci = len(caches)
        d = dlogits
        n_fc = len(self.spec.fc_widths)
        for i in reversed(range(n_fc + 1)):
            ci -= 1
            k -= 2
            dc, rc = caches[ci]
            if rc is not None:
                d = L.relu_backward(d, rc)
            d, grads[k], grads[k + 1] = L.dense_backward(d, dc, p[k])
        d = d.reshape(flat_shape)
        for blk in reversed(range(self.spec.blocks)):
            ci -= 1
            d = L.pool_backward(d, caches[ci])
            for j in reversed(range(self.spec.convs_per_block)):
                ci -= 1
                k -= 2
                cc, rc = caches[ci]
                d = L.relu_backward(d, rc)
                first = blk == 0 and j == 0
                d, grads[k], grads[k + 1] = L.conv_backward(d, cc, p[k], need_dx=not first)
        return grads

    def loss_and_grads(self, images, labels, class_weights):
        logits, state = self.forward(images, keep=True)
        loss, dlogits, probs = L.softmax_cross_entropy(
            logits, np.asarray(labels), np.asarray(class_weights, dtype=logits.dtype)
        )
        return loss, self.backward(dlogits, state), probs

    def predict_proba(self, images: np.ndarray, chunk: int = 128) -> np.ndarray:
        x = self._prepare(images)
        out = []
        for lo in range(0, len(x), chunk):
            logits, _ = self.forward(x[lo:lo + chunk])
            out.append(L.softmax(logits.astype(np.float64)))
        if not out:
            return np.zeros((0, self.spec.num_classes))
        return np.concatenate(out)


@dataclass
class TrainedNet:
    spec: NetSpec
    params: list[np.ndarray]
    metrics: dict = field(default_factory=dict)

    @property
    def network(self) -> Network:
        return Network(self.spec, self.params)

    def predict_proba(self, images: np.ndarray) -> np.ndarray:
        """Class probabilities for one image ``(side, side)`` or a batch ``(n, side, side)``."""
        images = np.asarray(images)
        if images.ndim == 2:
            return self.network.predict_proba(images[None])[0]
        return self.network.predict_proba(images)


def predict_proba(net: TrainedNet, image: np.ndarray) -> np.ndarray:
    return net.predict_proba(image)
