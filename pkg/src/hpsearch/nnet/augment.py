"""Random geometric and noise augmentation of square grayscale images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_SHIFT = 0.10  # fraction of the side
MAX_ANGLE = 15.0  # degrees
MAX_SHEAR = 0.10
ZOOM_RANGE = (0.9, 1.1)
MAX_NOISE = 0.05


@dataclass(frozen=True)
class AugmentParams:
    shift_x: float = 0.0  # pixels
    shift_y: float = 0.0
    angle: float = 0.0  # degrees
    shear: float = 0.0
    zoom: float = 1.0
    noise: float = 0.0  # Gaussian sigma, pixel range [0, 1]


NEUTRAL = AugmentParams()


def draw(rng: np.random.Generator, side: int) -> AugmentParams:
    t = MAX_SHIFT * side
    return AugmentParams(
        shift_x=float(rng.uniform(-t, t)),
        shift_y=float(rng.uniform(-t, t)),
        angle=float(rng.uniform(-MAX_ANGLE, MAX_ANGLE)),
        shear=float(rng.uniform(-MAX_SHEAR, MAX_SHEAR)),
        zoom=float(rng.uniform(*ZOOM_RANGE)),
        noise=float(rng.uniform(0.0, MAX_NOISE)),
    )


def _inverse_maps(params: list[AugmentParams]) -> tuple[np.ndarray, np.ndarray]:
    """Per-image 2x2 inverse matrices and shifts, in (row, col) order."""
    mats = np.empty((len(params), 2, 2))
    shifts = np.empty((len(params), 2))
    for i, p in enumerate(params):
        th = np.deg2rad(p.angle)
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        shear = np.array([[1.0, p.shear], [0.0, 1.0]])
        fwd = p.zoom * rot @ shear
        mats[i] = np.eye(2) if np.array_equal(fwd, np.eye(2)) else np.linalg.inv(fwd)
        shifts[i] = (p.shift_y, p.shift_x)
    return mats, shifts


def warp(images: np.ndarray, params: list[AugmentParams]) -> np.ndarray:
    """Apply each image's affine map about the image center (bilinear, edge-clamped)."""
    n, h, w = images.shape
    mats, shifts = _inverse_maps(params)
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    rr, cc = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    grid = np.stack([rr.ravel(), cc.ravel()], axis=1) - c  # (hw, 2)
    rel = grid[None, :, :] - shifts[:, None, :]  # (n, hw, 2)
    src = np.einsum("nij,npj->npi", mats, rel) + c
    r, q = src[..., 0], src[..., 1]
    r0 = np.floor(r)
    q0 = np.floor(q)
    fr = r - r0
    fq = q - q0
    r0 = r0.astype(np.int64)
    q0 = q0.astype(np.int64)
    r1 = np.clip(r0 + 1, 0, h - 1)
    q1 = np.clip(q0 + 1, 0, w - 1)
    r0 = np.clip(r0, 0, h - 1)
    q0 = np.clip(q0, 0, w - 1)
    flat = images.reshape(n, -1)
    rows = np.arange(n)[:, None]

    def at(ri, qi):
        return flat[rows, ri * w + qi]

    out = (
        at(r0, q0) * (1 - fr) * (1 - fq)
        + at(r0, q1) * (1 - fr) * fq
        + at(r1, q0) * fr * (1 - fq)
        + at(r1, q1) * fr * fq
    )
    return out.reshape(n, h, w).astype(images.dtype, copy=False)


def apply(images: np.ndarray, params: list[AugmentParams], rng: np.random.Generator) -> np.ndarray:
    out = warp(images, params)
    sigma = np.array([p.noise for p in params], dtype=out.dtype)
    if np.any(sigma > 0):
        out = out + rng.standard_normal(out.shape).astype(out.dtype) * sigma[:, None, None]
    return np.clip(out, 0.0, 1.0)


def augment_batch(images: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    images = np.asarray(images)
    params = [draw(rng, images.shape[-1]) for _ in range(len(images))]
    return apply(images, params, rng)


def augment(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Randomly shift, rotate, shear, zoom and add noise to one image."""
    image = np.asarray(image)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ValueError("expected a square grayscale image")
    return augment_batch(image[None], rng)[0]
