"""Synthetic test images and ROI maps, so evaluation needs no external data."""

from __future__ import annotations

import os

import numpy as np

from .roi import TimestepMap

CORPUS_KINDS = ("gaussian", "markov")


def gaussian_image(rng, width=64, height=64, channels=1, scale=0.25) -> np.ndarray:
    """I.i.d. ``N(0, scale^2)`` pixels clipped to ``[-1, 1]``."""
    return np.clip(rng.normal(0.0, scale, size=(channels, height, width)), -1.0, 1.0)


def markov_image(rng, width=64, height=64, channels=1, scale=0.25, rho=0.9) -> np.ndarray:
    """Separable first-order Gauss-Markov field with correlation ``rho`` per pixel step."""
    x = rng.normal(0.0, 1.0, size=(channels, height, width))
    c = np.sqrt(1.0 - rho * rho)
    for i in range(1, height):
        x[:, i] = rho * x[:, i - 1] + c * x[:, i]
    for j in range(1, width):
        x[:, :, j] = rho * x[:, :, j - 1] + c * x[:, :, j]
    return np.clip(scale * x, -1.0, 1.0)


def make_corpus(count=50, kind="gaussian", width=64, height=64, channels=1, seed=0, scale=0.25) -> list[np.ndarray]:
    if kind not in CORPUS_KINDS:
        raise ValueError(f"unknown corpus kind {kind!r}")
    rng = np.random.default_rng(seed)
    make = gaussian_image if kind == "gaussian" else markov_image
    return [make(rng, width, height, channels, scale) for _ in range(count)]


def two_level_map(rng, width=64, height=64, roi_level=5, background=40, levels=50) -> TimestepMap:
    """A background level with one rectangular ROI covering 20-50% of each side."""
    values = np.full((height, width), background, dtype=np.int64)
    h = int(rng.integers(max(1, height // 5), max(2, height // 2) + 1))
    w = int(rng.integers(max(1, width // 5), max(2, width // 2) + 1))
    y0 = int(rng.integers(0, height - h + 1))
    x0 = int(rng.integers(0, width - w + 1))
    values[y0 : y0 + h, x0 : x0 + w] = roi_level
    return TimestepMap(values, levels)


def write_corpus(directory, images, prefix="img") -> list[str]:
    from .pnm import write_image

    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, image in enumerate(images):
        path = os.path.join(directory, f"{prefix}{i:03d}.{'pgm' if image.shape[0] == 1 else 'ppm'}")
        write_image(path, image)
        paths.append(path)
    return paths
