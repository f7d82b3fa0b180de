"""Cascaded KPCA filter stages, feature extraction and the trained Model."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from .classifier import LinearModel, TrainLog, train_linear_ovr
from .core import Dataset, NetConfig, make_rng
from .kpca import InsufficientSpectrumError, KpcaBasis, learn_filters
from .patches import dense_windows, patches_at, remove_mean, sample_indices
from .pooling import Pooler

log = logging.getLogger(__name__)

# Upper bound on patch-matrix entries materialised at once.
_CHUNK_ENTRIES = 8_000_000


class StageError(RuntimeError):
    def __init__(self, stage: int, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


@dataclass(frozen=True)
class StageOutput:
    maps: np.ndarray              # (prod L, m, n)
    lineage: list[tuple[int, ...]]


def _chunk_size(per_item: int) -> int:
    return max(1, _CHUNK_ENTRIES // max(per_item, 1))


def apply_stage(images, basis: KpcaBasis, k1: int, k2: int, remove_patch_mean: bool = False) -> np.ndarray:
    """Filter a stack ``(K, m, n)`` with every component: returns ``(K, L, m, n)``."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if basis.patch_dim != k1 * k2:
        raise ValueError(f"basis patch dim {basis.patch_dim} != {k1}x{k2}")
    K, m, n = images.shape
    L = basis.num_components
    width = k1 * k2 if basis.kernel.kind == "linear" else basis.basis_patches.shape[0] + k1 * k2
    step = _chunk_size(m * n * width)
    out = np.empty((K, L, m, n))
    for start in range(0, K, step):
        chunk = images[start:start + step]
        pts = dense_windows(chunk, k1, k2).reshape(-1, k1 * k2)
        if remove_patch_mean:
            pts = remove_mean(pts)
        scores = basis.responses(pts)  # (k*m*n, L)
        out[start:start + step] = scores.reshape(len(chunk), m, n, L).transpose(0, 3, 1, 2)
    return out


def forward_maps(images, stage_bases: list[KpcaBasis], config: NetConfig) -> np.ndarray:
    """Run a stack ``(N, m, n)`` through the stages: ``(N, L1*...*LS, m, n)``.

    Map index ``l1*L2*L3 + l2*L3 + l3`` carries lineage ``(l1, l2, l3)``.
    """
    maps = np.asarray(images, dtype=np.float64)
    if maps.ndim == 2:
        maps = maps[None]
    N, m, n = maps.shape
    maps = maps[:, None]
    for basis in stage_bases:
        flat = maps.reshape(-1, m, n)
        maps = apply_stage(flat, basis, config.patch_rows, config.patch_cols,
                           config.remove_patch_mean).reshape(N, -1, m, n)
    return maps


def forward(image, stage_bases: list[KpcaBasis], config: NetConfig) -> StageOutput:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("forward takes a single 2-D image")
    maps = forward_maps(image, stage_bases, config)[0]
    lineage = list(itertools.product(*(range(b.num_components) for b in stage_bases)))
    return StageOutput(maps, lineage)


def _stage_patches(images: np.ndarray, prior: list[KpcaBasis], config: NetConfig,
                   rng: np.random.Generator) -> np.ndarray:
    """Budgeted uniform sample of patches from all maps the prior stages produce."""
    N, m, n = images.shape
    per_image = math.prod(b.num_components for b in prior)
    span = per_image * m * n
    chosen = sample_indices(N * span, config.train_patch_budget, rng)
    k1, k2 = config.patch_rows, config.patch_cols
    step = _chunk_size(span * max(config.patch_dim, 1))
    parts = []
    for start in range(0, N, step):
        lo, hi = np.searchsorted(chosen, [start * span, (start + step) * span])
        if lo == hi:
            continue
        maps = forward_maps(images[start:start + step], prior, config).reshape(-1, m, n)
        parts.append(patches_at(maps, chosen[lo:hi] - start * span, k1, k2, config.remove_patch_mean))
    return np.concatenate(parts)


def train_network(images, config: NetConfig, rng: np.random.Generator) -> list[KpcaBasis]:
    """Learn one filter bank per stage, each from the previous stage's outputs."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] == 0:
        raise ValueError("train_network needs a non-empty (N, m, n) image stack")
    bases: list[KpcaBasis] = []
    for s, L in enumerate(config.filters_per_stage):
        if s > 0 and config.share_stage_filters:
            bases.append(bases[0])
            continue
        patches = _stage_patches(images, bases, config, rng)
        try:
            basis = learn_filters(patches, config.kernel, L)
        except (InsufficientSpectrumError, ValueError) as exc:
            raise StageError(s + 1, exc) from exc
        log.info("stage %d: %d components from %d patches", s + 1, L, patches.shape[0])
        bases.append(basis)
    return bases


def make_pooler(config: NetConfig, shape: tuple[int, int]) -> Pooler:
    return Pooler(shape[0], shape[1], config.block_rows, config.block_cols,
                  config.overlap_ratio, config.filters_per_stage[-1])


def feature_length(config: NetConfig, shape: tuple[int, int]) -> int:
    groups = math.prod(config.filters_per_stage[:-1])
    return make_pooler(config, shape).feature_length(groups)


def extract_features(images, stage_bases: list[KpcaBasis], config: NetConfig) -> np.ndarray:
    """Pooled histogram features ``(N, D)`` for a stack of images."""
    images = np.asarray(images, dtype=np.float64)
    N, m, n = images.shape
    pooler = make_pooler(config, (m, n))
    D = pooler.feature_length(math.prod(config.filters_per_stage[:-1]))
    out = np.empty((N, D), dtype=pooler.dtype)
    # apply_stage bounds its own scratch space; this only bounds the map stack.
    step = _chunk_size(4 * math.prod(config.filters_per_stage) * m * n)
    for start in range(0, N, step):
        maps = forward_maps(images[start:start + step], stage_bases, config)
        out[start:start + step] = pooler(maps)
    return out


@dataclass(frozen=True, eq=False)
class Model:
    config: NetConfig
    stage_bases: list[KpcaBasis]
    classifier: LinearModel
    class_count: int
    image_shape: tuple[int, int]

    def __post_init__(self):
        if len(self.stage_bases) != self.config.stages:
            raise ValueError("one basis per stage required")
        for basis, L in zip(self.stage_bases, self.config.filters_per_stage):
            if basis.num_components != L:
                raise ValueError("basis size disagrees with filters_per_stage")
        if self.classifier.dim != feature_length(self.config, self.image_shape):
            raise ValueError("classifier dimension disagrees with pooled feature length")

    def features(self, images) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None]
        if images.shape[1:] != tuple(self.image_shape):
            raise ValueError(f"images are {images.shape[1]}x{images.shape[2]}, "
                             f"model expects {self.image_shape[0]}x{self.image_shape[1]}")
        return extract_features(images, self.stage_bases, self.config)

    def predict(self, images) -> np.ndarray:
        return self.classifier.predict(self.features(images))


def fit(train: Dataset, config: NetConfig, lam: float = 1e-3,
        telemetry: TrainLog | None = None) -> tuple[Model, np.ndarray]:
    """Train filter stages then the classifier; returns the model and training features."""
    rng = make_rng(config.seed)
    bases = train_network(train.images, config, rng)
    feats = extract_features(train.images, bases, config)
    clf = train_linear_ovr(feats, train.labels, lam, class_count=train.class_count, telemetry=telemetry)
    return Model(config, bases, clf, train.class_count, tuple(train.shape)), feats
