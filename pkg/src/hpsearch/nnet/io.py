"""Flat binary weight files.

Layout::

    magic    b"HPNN"
    version  uint32 little-endian (1)
    hlen     uint32 little-endian, byte length of the header
    header   UTF-8 JSON: {"spec": {...}, "spec_hash": "...",
             "shapes": [[s, s, cin, cout], [cout], ...], "metrics": {...}}
    body     every parameter as little-endian float32, C order,
             in declaration order (conv W, b per layer, then dense W, b)
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import NetSpec, TrainedNet

MAGIC = b"HPNN"
VERSION = 1


def _clean(metrics: dict) -> dict:
    out = {}
    for k, v in metrics.items():
        if isinstance(v, float) and not np.isfinite(v):
            v = None
        out[k] = v
    return out


def dumps(net: TrainedNet) -> bytes:
    header = {
        "spec": net.spec.to_dict(),
        "spec_hash": net.spec.hash(),
        "shapes": [list(p.shape) for p in net.params],
        "metrics": _clean(net.metrics),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(p, dtype="<f4").tobytes() for p in net.params)
    return MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + body


def loads(data: bytes) -> TrainedNet:
    if data[:4] != MAGIC:
        raise ValueError("not a weight file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise ValueError(f"unsupported weight file version {version}")
    header = json.loads(data[12:12 + hlen])
    spec = NetSpec.from_dict(header["spec"])
    if spec.hash() != header["spec_hash"]:
        raise ValueError("spec hash mismatch")
    shapes = [tuple(s) for s in header["shapes"]]
    if shapes != spec.param_shapes():
        raise ValueError("layer shapes do not match the spec")
    offset = 12 + hlen
    params = []
    for shape in shapes:
        size = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset).reshape(shape)
        params.append(arr.astype(np.float32))
        offset += 4 * size
    if offset != len(data):
        raise ValueError("trailing bytes after the last parameter")
    return TrainedNet(spec, params, header.get("metrics", {}))


def save(net: TrainedNet, path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path) -> TrainedNet:
    return loads(Path(path).read_bytes())
