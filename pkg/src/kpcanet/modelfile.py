"""Binary model files.

Layout (all integers little-endian)::

    b"KPCN"                      magic
    u16                          format version
    u32                          manifest length in bytes
    manifest                     UTF-8 JSON: config, class count, image shape,
                                 and the (name, shape) of every array that follows
    arrays                       float64 little-endian, C order, manifest order
    32 bytes                     SHA-256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .classifier import LinearModel
from .core import DataError, NetConfig
from .kpca import KpcaBasis
from .network import Model

MAGIC = b"KPCN"
VERSION = 1
_DIGEST = 32


class ModelFormatError(DataError):
    pass


def _arrays(model: Model) -> list[tuple[str, np.ndarray]]:
    out = []
    for s, b in enumerate(model.stage_bases):
        out += [
            (f"stage{s}.basis_patches", b.basis_patches),
            (f"stage{s}.alphas", b.alphas),
            (f"stage{s}.eigenvalues", b.eigenvalues),
            (f"stage{s}.basis_col_means", b.basis_col_means),
            (f"stage{s}.basis_total_mean", np.array([b.basis_total_mean])),
        ]
    clf = model.classifier
    out += [("classifier.weights", clf.weights), ("classifier.bias", clf.bias),
            ("classifier.feature_scale", clf.feature_scale)]
    return out


def dumps(model: Model) -> bytes:
    arrays = _arrays(model)
    manifest = {
        "config": model.config.to_dict(),
        "class_count": model.class_count,
        "image_shape": list(model.image_shape),
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(head)), head]
    parts += [np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(data: bytes) -> Model:
    if len(data) < 10 + _DIGEST or data[:4] != MAGIC:
        raise ModelFormatError("not a KPCN model file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch: model file is corrupt")
    version, head_len = struct.unpack_from("<HI", body, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (this build reads {VERSION})")
    manifest = json.loads(body[10:10 + head_len].decode())
    offset = 10 + head_len
    arrays = {}
    for name, shape in manifest["arrays"]:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(body, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
    if offset != len(body):
        raise ModelFormatError("model file has trailing bytes")

    config = NetConfig.from_dict(manifest["config"])
    bases = []
    for s in range(config.stages):
        bases.append(KpcaBasis(
            config.kernel,
            arrays[f"stage{s}.basis_patches"],
            arrays[f"stage{s}.alphas"],
            arrays[f"stage{s}.eigenvalues"],
            arrays[f"stage{s}.basis_col_means"],
            float(arrays[f"stage{s}.basis_total_mean"][0]),
        ))
    clf = LinearModel(arrays["classifier.weights"], arrays["classifier.bias"],
                      arrays["classifier.feature_scale"])
    return Model(config, bases, clf, manifest["class_count"], tuple(manifest["image_shape"]))


def save(model: Model, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> Model:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc.strerror}") from exc
    return loads(data)
