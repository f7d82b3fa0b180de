"""Seeded toy datasets for smoke tests and demos."""
from __future__ import annotations

import numpy as np

from .core import Dataset, make_rng


def oriented_stripes(count: int, size: int = 16, seed: int = 0, noise: float = 0.05) -> Dataset:
    """Two classes of sinusoidal stripes: vertical bands (0) and horizontal bands (1).

    Orientation jitters by +-0.2 rad, frequency lies in [0.15, 0.25]
    cycles/pixel and phase in [-0.3, 0.3] rad; Gaussian pixel noise is added
    and values are clipped to [0, 1]. Labels alternate 0, 1, 0, ...
    """
    rng = make_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    labels = np.arange(count) % 2
    images = np.empty((count, size, size))
    for i, label in enumerate(labels):
        theta = (0.0 if label == 0 else np.pi / 2) + rng.uniform(-0.2, 0.2)
        freq = rng.uniform(0.15, 0.25)
        phase = rng.uniform(-0.3, 0.3)
        wave = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        images[i] = 0.5 + 0.4 * wave + rng.normal(0.0, noise, (size, size))
    return Dataset(np.clip(images, 0.0, 1.0), labels, 2)
