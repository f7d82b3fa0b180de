"""Dense zero-padded patch extraction and seeded patch subsampling.

A patch matrix is an ndarray of shape ``(count, k1*k2)``, one vectorised
(row-major) patch per row.

For a ``k``-wide window the padding is ``(k-1)//2`` before and ``k//2`` after,
so pixel ``j`` owns the window starting at ``j - (k-1)//2``. Odd ``k`` gives
the usual centred window.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def pad_widths(k: int) -> tuple[int, int]:
    return (k - 1) // 2, k // 2


def pad_images(images: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Zero-pad the last two axes so every pixel has a full window."""
    images = np.asarray(images, dtype=np.float64)
    widths = [(0, 0)] * (images.ndim - 2) + [pad_widths(k1), pad_widths(k2)]
    return np.pad(images, widths, mode="constant")


def dense_windows(images: np.ndarray, k1: int, k2: int) -> np.ndarray:
    """Read-only view of shape ``(..., m, n, k1, k2)`` over the padded images."""
    if k1 < 1 or k2 < 1:
        raise ValueError("patch size must be positive")
    return sliding_window_view(pad_images(images, k1, k2), (k1, k2), axis=(-2, -1))


def remove_mean(patches: np.ndarray) -> np.ndarray:
    return patches - patches.mean(axis=1, keepdims=True)


def extract_dense(image, k1: int, k2: int, remove_patch_mean: bool = False) -> np.ndarray:
    """All ``m*n`` patches of one image (or of a stack), in row-major pixel order."""
    image = np.asarray(image, dtype=np.float64)
    win = dense_windows(image, k1, k2)
    out = win.reshape(-1, k1 * k2)
    return remove_mean(out) if remove_patch_mean else np.ascontiguousarray(out)


def subsample(patches: np.ndarray, budget: int, rng: np.random.Generator) -> np.ndarray:
    """Keep ``min(budget, count)`` patches, drawn uniformly without replacement.

    Selected patches keep their original relative order.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    count = patches.shape[0]
    if count == 0:
        raise ValueError("no patches")
    idx = sample_indices(count, budget, rng)
    return patches[idx]


def sample_indices(count: int, budget: int, rng: np.random.Generator) -> np.ndarray:
    take = min(budget, count)
    return np.sort(rng.choice(count, size=take, replace=False))


def patches_at(images: np.ndarray, flat_idx: np.ndarray, k1: int, k2: int,
               remove_patch_mean: bool = False) -> np.ndarray:
    """Patches of a stack ``(K, m, n)`` at flat indices into its ``K*m*n`` pixels.

    Equivalent to ``extract_dense(images)[flat_idx]`` without building the
    full patch matrix.
    """
    K, m, n = images.shape
    win = dense_windows(images, k1, k2)
    img, rest = np.divmod(np.asarray(flat_idx, dtype=np.int64), m * n)
    r, c = np.divmod(rest, n)
    out = win[img, r, c].reshape(-1, k1 * k2)
    return remove_mean(out) if remove_patch_mean else out
