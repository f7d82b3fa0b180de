"""Dataset readers: IDX (MNIST-style) files and per-class directories of PGM images."""
from __future__ import annotations

import gzip
import logging
import os
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError, Dataset, make_rng

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """Images ``(count, rows, cols)`` scaled to [0, 1] from an IDX3 unsigned-byte file."""
    with _open(path) as fh:
        header = fh.read(16)
        if len(header) < 4 or struct.unpack(">I", header[:4])[0] != IDX_IMAGES_MAGIC:
            raise DataError(f"{path}: not an IDX image file")
        if len(header) < 16:
            raise DataError(f"{path}: truncated IDX header")
        _, count, rows, cols = struct.unpack(">IIII", header)
        payload = fh.read(count * rows * cols)
    size = rows * cols
    if len(payload) < count * size:
        raise DataError(f"{path}: short read at image {len(payload) // size if size else 0}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    return pixels.astype(np.float64) / 255.0


def read_idx_labels(path) -> np.ndarray:
    with _open(path) as fh:
        header = fh.read(8)
        if len(header) < 4 or struct.unpack(">I", header[:4])[0] != IDX_LABELS_MAGIC:
            raise DataError(f"{path}: not an IDX label file")
        if len(header) < 8:
            raise DataError(f"{path}: truncated IDX header")
        count = struct.unpack(">I", header[4:])[0]
        payload = fh.read(count)
    if len(payload) < count:
        raise DataError(f"{path}: short read at label {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def write_idx_images(path, images) -> None:
    """Write images in [0, 1] (or raw uint8) as an IDX3 file."""
    arr = np.asarray(images)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    count, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(arr.tobytes())


def write_idx_labels(path, labels) -> None:
    arr = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, arr.size))
        fh.write(arr.tobytes())


_PGM_HEADER = re.compile(rb"P5(?:\s+|#[^\n]*\n)+(\d+)(?:\s+|#[^\n]*\n)+(\d+)"
                         rb"(?:\s+|#[^\n]*\n)+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit PGM as floats in [0, 1]."""
    data = Path(path).read_bytes()
    match = _PGM_HEADER.match(data)
    if match is None:
        raise DataError(f"{path}: not a binary PGM file")
    width, height, maxval = (int(g) for g in match.groups())
    if not 0 < maxval < 256:
        raise DataError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    body = data[match.end():match.end() + width * height]
    if len(body) < width * height:
        raise DataError(f"{path}: truncated PGM payload")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / maxval


def write_pgm(path, image) -> None:
    """Write a [0, 1] image as 8-bit P5 PGM (values are rounded and clipped)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(raw.tobytes())


@dataclass
class DatasetManifest:
    """Where a dataset lives and what it must look like.

    ``source`` is ``idx_pair`` (``images`` + ``labels`` files) or
    ``image_dir`` (``root`` with one sub-directory of PGM files per class).
    ``subset`` optionally keeps a seeded random subset of that many samples.
    """

    name: str
    source: str
    paths: dict = field(default_factory=dict)
    class_count: int | None = None
    shape: tuple[int, int] | None = None
    subset: int | None = None
    subset_seed: int = 0

    def __post_init__(self):
        if self.source not in ("idx_pair", "image_dir"):
            raise DataError(f"unknown dataset source {self.source!r}")
        need = ("images", "labels") if self.source == "idx_pair" else ("root",)
        missing = [k for k in need if k not in self.paths]
        if missing:
            raise DataError(f"dataset {self.name!r} is missing path(s): {', '.join(missing)}")


def read_image_dir(root, manifest: DatasetManifest | None = None) -> Dataset:
    """One sub-directory per class (sorted by name); each holds P5 PGM files."""
    root = Path(root)
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"{root}: no class directories")
    if manifest is not None and manifest.class_count not in (None, len(class_dirs)):
        raise DataError(f"{root}: {len(class_dirs)} class directories, manifest declares "
                        f"{manifest.class_count}")
    shape = manifest.shape if manifest is not None else None
    images, labels, skipped = [], [], 0
    for label, cdir in enumerate(class_dirs):
        found = 0
        for f in sorted(p for p in cdir.iterdir() if p.is_file()):
            try:
                img = read_pgm(f)
            except DataError:
                skipped += 1
                continue
            if shape is None:
                shape = img.shape
            elif img.shape != tuple(shape):
                raise DataError(f"{f}: image is {img.shape[0]}x{img.shape[1]}, "
                                f"expected {shape[0]}x{shape[1]}")
            images.append(img)
            labels.append(label)
            found += 1
        if found == 0:
            raise DataError(f"{cdir}: class with no samples")
    if skipped:
        log.warning("%s: skipped %d non-PGM file(s)", root, skipped)
    return Dataset(np.stack(images), np.array(labels), len(class_dirs))


def load_dataset(manifest: DatasetManifest) -> Dataset:
    if manifest.source == "idx_pair":
        images = read_idx_images(manifest.paths["images"])
        labels = read_idx_labels(manifest.paths["labels"])
        if images.shape[0] != labels.shape[0]:
            raise DataError(f"dataset {manifest.name!r}: {images.shape[0]} images "
                            f"but {labels.shape[0]} labels")
        if manifest.shape is not None and images.shape[1:] != tuple(manifest.shape):
            raise DataError(f"dataset {manifest.name!r}: images are "
                            f"{images.shape[1]}x{images.shape[2]}, expected "
                            f"{manifest.shape[0]}x{manifest.shape[1]}")
        count = manifest.class_count or (int(labels.max()) + 1 if labels.size else 1)
        data = Dataset(images, labels, count)
    else:
        data = read_image_dir(manifest.paths["root"], manifest)
    if manifest.subset is not None and manifest.subset < len(data):
        idx = np.sort(make_rng(manifest.subset_seed).choice(len(data), manifest.subset, replace=False))
        data = data.subset(idx)
    log.info("loaded %s: %d samples of %dx%d, %d classes", manifest.name, len(data),
             *data.shape, data.class_count)
    return data


def resolve(base, path) -> str:
    return os.fspath(Path(base, path)) if not os.path.isabs(path) else path
