"""The ten kernel functions, pointwise and as Gram / cross-Gram matrices.

Formulas follow the published table literally, with two documented quirks:

* ``exponential`` uses the *unsquared* distance, ``exp(-|x-y| / (2 sigma^2))``.
* ``rational_quadratic`` keeps the outer exponential,
  ``exp(1 - |x-y|^2 / (|x-y|^2 + c))``, so ``k(x, x) = e`` rather than 1.

``circular`` uses the standard form ``(2/pi)(arccos u - u sqrt(1 - u^2))`` with
``u = |x-y| / sigma`` and zero outside the support.

With pixels in [0, 1] the distance between two 64-pixel patches is usually
far larger than ``sigma = 0.2``, so circular and spherical Gram matrices come
out close to the identity. That is the published parameterisation; tune
``sigma`` in the config if it matters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "linear": {"c": 0.0},
    "gaussian": {"sigma": 1.0},
    "polynomial": {"d": 3},
    "exponential": {"sigma": 1.0},
    "laplacian": {"sigma": 1.0},
    "sigmoid": {"alpha": 0.5, "c": -1.0},
    "rational_quadratic": {"c": 1.0},
    "inverse_multiquadric": {"c": 1.0},
    "circular": {"sigma": 0.2},
    "spherical": {"sigma": 0.2},
}
KINDS = tuple(DEFAULT_PARAMS)

_DOT_KINDS = {"linear", "polynomial", "sigmoid"}

_ALIASES = {
    "rationalquadratic": "rational_quadratic",
    "inversemultiquadric": "inverse_multiquadric",
    "rbf": "gaussian",
}


def _normalise_kind(kind: str) -> str:
    k = kind.strip().lower().replace("-", "_").replace(" ", "_")
    k = _ALIASES.get(k.replace("_", ""), k)
    if k not in DEFAULT_PARAMS:
        raise ValueError(f"unknown kernel {kind!r}; expected one of {', '.join(KINDS)}")
    return k


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = _normalise_kind(self.kind)
        unknown = set(self.params) - set(DEFAULT_PARAMS[kind])
        if unknown:
            raise ValueError(f"{kind} kernel has no parameter(s) {sorted(unknown)}")
        params = {**DEFAULT_PARAMS[kind], **{k: float(v) for k, v in self.params.items()}}
        if "sigma" in params and not params["sigma"] > 0:
            raise ValueError("sigma must be positive")
        if kind == "polynomial":
            d = params["d"]
            if d != int(d) or d < 1:
                raise ValueError("polynomial degree d must be a positive integer")
            params["d"] = int(d)
        if kind == "rational_quadratic" and not params["c"] > 0:
            raise ValueError("rational_quadratic c must be positive")
        if kind == "inverse_multiquadric" and params["c"] == 0:
            raise ValueError("inverse_multiquadric c must be non-zero")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)

    @property
    def psd_guaranteed(self) -> bool:
        return self.kind != "sigmoid"

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items()))))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items()))}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], dict(d.get("params", {})))

    def __str__(self):
        ps = ", ".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.kind}({ps})"


def _apply_dot(spec: KernelSpec, dots):
    p = spec.params
    if spec.kind == "linear":
        return dots + p["c"]
    if spec.kind == "polynomial":
        return (dots + 1.0) ** p["d"]
    return np.tanh(p["alpha"] * dots + p["c"])


def _apply_sqdist(spec: KernelSpec, d2):
    p = spec.params
    kind = spec.kind
    if kind == "gaussian":
        return np.exp(-d2 / (2.0 * p["sigma"] ** 2))
    if kind == "exponential":
        return np.exp(-np.sqrt(d2) / (2.0 * p["sigma"] ** 2))
    if kind == "laplacian":
        return np.exp(-np.sqrt(d2) / p["sigma"])
    if kind == "rational_quadratic":
        return np.exp(1.0 - d2 / (d2 + p["c"]))
    if kind == "inverse_multiquadric":
        return 1.0 / np.sqrt(d2 + p["c"] ** 2)
    u = np.sqrt(d2) / p["sigma"]
    inside = u < 1.0
    uc = np.where(inside, u, 0.0)
    if kind == "circular":
        val = (2.0 / np.pi) * (np.arccos(uc) - uc * np.sqrt(1.0 - uc * uc))
    else:  # spherical
        val = 1.0 - 1.5 * uc + 0.5 * uc ** 3
    return np.where(inside, val, 0.0)


def evaluate(spec: KernelSpec, x, y) -> float:
    """k(x, y) for two vectors of equal length."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if spec.kind in _DOT_KINDS:
        return float(_apply_dot(spec, float(np.dot(x, y))))
    diff = x - y
    return float(_apply_sqdist(spec, float(np.dot(diff, diff))))


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise ValueError("points must be a (count, dim) array")
    return pts


def cross_gram(spec: KernelSpec, basis, queries) -> np.ndarray:
    """Kernel values between every basis point (rows) and every query (columns)."""
    basis = _as_points(basis)
    queries = _as_points(queries)
    if basis.shape[1] != queries.shape[1]:
        raise ValueError(f"patch dimension mismatch: {basis.shape[1]} vs {queries.shape[1]}")
    if spec.kind in _DOT_KINDS:
        return _apply_dot(spec, basis @ queries.T)
    return _apply_sqdist(spec, cdist(basis, queries, "sqeuclidean"))


def gram(spec: KernelSpec, points) -> np.ndarray:
    """Symmetric Gram matrix; each unordered pair is evaluated once and mirrored."""
    pts = _as_points(points)
    if pts.shape[0] < 1:
        raise ValueError("gram needs at least one point")
    K = cross_gram(spec, pts, pts)
    upper = np.triu_indices_from(K, k=1)
    K.T[upper] = K[upper]
    return K
