"""Binary hashing of last-stage responses and block-wise histogram pooling.

Feature layout is group-major, then block (row-major by top-left corner),
then histogram bin. A group is the set of last-stage maps sharing every
lineage index but the last one.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

MAX_BITS = 16


class Block(NamedTuple):
    row: int
    col: int
    rows: int
    cols: int


def heaviside(x):
    """Step function with H(0) = 0."""
    return (np.asarray(x) > 0).astype(np.uint8)


def hash_maps(maps) -> np.ndarray:
    """Pack the signs of ``L`` maps into one integer code per pixel.

    ``maps`` has shape ``(..., L, m, n)``; map ``s`` (0-based) contributes
    bit ``2**s``.
    """
    maps = np.asarray(maps)
    if maps.ndim < 3:
        raise ValueError("expected a stack of at least one map")
    L = maps.shape[-3]
    if L > MAX_BITS:
        raise ValueError(f"{L} maps: bin count exceeds 2^{MAX_BITS}")
    codes = np.zeros(maps.shape[:-3] + maps.shape[-2:], dtype=np.uint32)
    for s in range(L):
        codes |= (maps[..., s, :, :] > 0).astype(np.uint32) << np.uint32(s)
    return codes


def block_starts(size: int, block: int, stride: int) -> list[int]:
    starts = list(range(0, size - block + 1, stride))
    if starts[-1] + block < size:
        starts.append(size - block)
    return starts


def block_stride(block: int, overlap: float) -> int:
    return max(1, int(np.floor(block * (1.0 - overlap) + 0.5)))


def partition_blocks(rows: int, cols: int, b1: int, b2: int, overlap: float) -> list[Block]:
    """Overlapping blocks covering the image, with the last one clamped flush."""
    if b1 < 1 or b2 < 1:
        raise ValueError("block size must be positive")
    if b1 > rows or b2 > cols:
        raise ValueError(f"block {b1}x{b2} larger than image {rows}x{cols}")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must be in [0, 1)")
    rs = block_starts(rows, b1, block_stride(b1, overlap))
    cs = block_starts(cols, b2, block_stride(b2, overlap))
    return [Block(r, c, b1, b2) for r in rs for c in cs]


def block_histogram(codes: np.ndarray, block: Block, bins: int) -> np.ndarray:
    r, c, h, w = block
    if r < 0 or c < 0 or r + h > codes.shape[0] or c + w > codes.shape[1]:
        raise ValueError("block out of bounds")
    return np.bincount(codes[r:r + h, c:c + w].ravel(), minlength=bins)[:bins]


def count_dtype(block_area: int) -> np.dtype:
    return np.min_scalar_type(block_area)


class Pooler:
    """Vectorised hashing + histogramming for a fixed image/block geometry."""

    def __init__(self, rows: int, cols: int, b1: int, b2: int, overlap: float, bits: int):
        if not 1 <= bits <= MAX_BITS:
            raise ValueError(f"hash width must be in [1, {MAX_BITS}]")
        self.shape = (rows, cols)
        self.blocks = partition_blocks(rows, cols, b1, b2, overlap)
        self.bins = 2 ** bits
        self.bits = bits
        self.dtype = count_dtype(b1 * b2)
        grid = np.arange(rows * cols).reshape(rows, cols)
        self._gather = np.stack([grid[r:r + h, c:c + w].ravel() for r, c, h, w in self.blocks])

    def feature_length(self, groups: int) -> int:
        return groups * len(self.blocks) * self.bins

    def __call__(self, maps: np.ndarray) -> np.ndarray:
        """Features ``(N, G*B*bins)`` from last-stage maps ``(N, G*bits, m, n)``."""
        N, total, m, n = maps.shape
        if (m, n) != self.shape:
            raise ValueError(f"maps are {m}x{n}, pooler expects {self.shape[0]}x{self.shape[1]}")
        if total % self.bits:
            raise ValueError(f"{total} maps do not split into groups of {self.bits}")
        G = total // self.bits
        codes = hash_maps(maps.reshape(N, G, self.bits, m, n)).reshape(N, G, m * n)
        B = len(self.blocks)
        gathered = codes[:, :, self._gather].astype(np.int64)  # (N, G, B, area)
        offsets = np.arange(N * G * B, dtype=np.int64).reshape(N, G, B, 1) * self.bins
        counts = np.bincount((gathered + offsets).ravel(), minlength=N * G * B * self.bins)
        return counts.reshape(N, G * B * self.bins).astype(self.dtype)


def pool(maps: np.ndarray, bits: int, block_rows: int, block_cols: int, overlap: float) -> np.ndarray:
    """Feature vector of one image from its ``(G*bits, m, n)`` last-stage maps."""
    maps = np.asarray(maps)
    pooler = Pooler(maps.shape[-2], maps.shape[-1], block_rows, block_cols, overlap, bits)
    return pooler(maps[None])[0]
