"""Shared types: network configuration, seeded randomness and datasets."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .kernels import KernelSpec

MAX_HASH_BITS = 16


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give identical streams on every platform."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams for parallel workers."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def as_gray_image(pixels, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return a 2-D float64 image.

    Accepts a 2-D array, or a flat row-major buffer together with ``rows``
    and ``cols``.
    """
    img = np.asarray(pixels, dtype=np.float64)
    if rows is not None or cols is not None:
        if img.size != rows * cols:
            raise DataError(f"pixel count {img.size} != {rows}*{cols}")
        img = img.reshape(rows, cols)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DataError("image contains non-finite pixels")
    return img


@dataclass(frozen=True)
class NetConfig:
    stages: int = 2
    patch_rows: int = 8
    patch_cols: int = 8
    filters_per_stage: tuple[int, ...] = (8, 8)
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("linear"))
    block_rows: int = 8
    block_cols: int = 8
    overlap_ratio: float = 0.5
    train_patch_budget: int = 3000
    seed: int = 0
    remove_patch_mean: bool = False
    share_stage_filters: bool = False

    def __post_init__(self):
        object.__setattr__(self, "filters_per_stage", tuple(int(v) for v in self.filters_per_stage))
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.stages <= 3:
            raise ConfigError(f"stages must be in [1, 3], got {self.stages}")
        if len(self.filters_per_stage) != self.stages:
            raise ConfigError(
                f"filters_per_stage has {len(self.filters_per_stage)} entries for {self.stages} stages")
        for name in ("patch_rows", "patch_cols", "block_rows", "block_cols", "train_patch_budget"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for L in self.filters_per_stage:
            if L < 1:
                raise ConfigError("filter counts must be positive")
            if L > self.train_patch_budget:
                raise ConfigError(f"filter count {L} exceeds train_patch_budget {self.train_patch_budget}")
        if self.filters_per_stage[-1] > MAX_HASH_BITS:
            raise ConfigError(
                f"last-stage filter count {self.filters_per_stage[-1]}: bin count exceeds 2^{MAX_HASH_BITS}")
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ConfigError("overlap_ratio must be in [0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.share_stage_filters and len(set(self.filters_per_stage)) != 1:
            raise ConfigError("share_stage_filters requires the same filter count at every stage")

    @property
    def patch_dim(self) -> int:
        return self.patch_rows * self.patch_cols

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters_per_stage"] = list(self.filters_per_stage)
        d["kernel"] = self.kernel.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        d["kernel"] = KernelSpec.from_dict(d["kernel"])
        d["filters_per_stage"] = tuple(d["filters_per_stage"])
        return cls(**d)


@dataclass(frozen=True)
class Dataset:
    """N same-sized grayscale images with integer class labels."""

    images: np.ndarray  # (N, m, n) float64
    labels: np.ndarray  # (N,) int64
    class_count: int

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 3:
            raise DataError(f"images must be (N, m, n), got {images.shape}")
        if labels.shape != (images.shape[0],):
            raise DataError(f"{labels.shape[0]} labels for {images.shape[0]} images")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError(f"labels must lie in [0, {self.class_count})")
        if not np.all(np.isfinite(images)):
            raise DataError("dataset contains non-finite pixels")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.images.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1:]

    def subset(self, idx: Sequence[int]) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx], self.class_count)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)


def split_dataset(data: Dataset, train_fraction: float | None = None,
                  rng: np.random.Generator | None = None, *,
                  train_count: int | None = None) -> tuple[Dataset, Dataset]:
    """Shuffle and split into disjoint train/test parts.

    Give either ``train_fraction`` (in (0, 1)) or an absolute ``train_count``.
    The split is unstratified; both parts keep the shuffled order.
    """
    n = len(data)
    if n == 0:
        raise DataError("empty dataset")
    if rng is None:
        raise ValueError("an explicit rng is required")
    if train_count is None:
        if train_fraction is None or not 0.0 < train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        train_count = int(round(n * train_fraction))
    if not 0 <= train_count <= n:
        raise ValueError(f"train_count {train_count} outside [0, {n}]")
    order = rng.permutation(n)
    return data.subset(order[:train_count]), data.subset(order[train_count:])
