"""One-vs-rest linear SVM on pooled features, plus error metrics.

Each class gets an L2-regularised hinge-loss classifier

    min_w  lam/2 |w|^2 + 1/n sum_i max(0, 1 - y_i w.x_i)

where ``x_i`` is the max-normalised feature vector with a constant 1
appended (the bias is regularised like any other weight). Training runs dual
coordinate descent on the n x n Gram matrix of the training set, visiting
coordinates in seeded random order, so results are deterministic and the
cost per sweep does not depend on the feature dimension. Optimisation stops
when the duality gap falls below ``tol`` times the primal objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import make_rng

log = logging.getLogger(__name__)

# Columns per chunk when streaming wide feature matrices.
_COL_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray        # (c, D)
    bias: np.ndarray           # (c,)
    feature_scale: np.ndarray  # (D,), multiplies raw features

    def __post_init__(self):
        for name in ("weights", "bias", "feature_scale"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        c, D = self.weights.shape
        if self.bias.shape != (c,) or self.feature_scale.shape != (D,):
            raise ValueError("inconsistent classifier shapes")

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, features) -> np.ndarray:
        X = _as_matrix(features)
        if X.shape[1] != self.dim:
            raise ValueError(f"feature dimension {X.shape[1]} != model dimension {self.dim}")
        W = self.weights * self.feature_scale  # fold the normalisation into the weights
        out = np.zeros((X.shape[0], self.class_count))
        for start in range(0, X.shape[1], _COL_CHUNK):
            cols = slice(start, start + _COL_CHUNK)
            out += X[:, cols].astype(np.float64) @ W[:, cols].T
        return out + self.bias

    def predict(self, features) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.scores(features), axis=1)


@dataclass
class TrainLog:
    """Per-class optimiser telemetry."""

    dual_objective: list[list[float]] = field(default_factory=list)
    duality_gap: list[float] = field(default_factory=list)
    sweeps: list[int] = field(default_factory=list)


def _as_matrix(features) -> np.ndarray:
    X = np.asarray(features)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError("features must be (n, D)")
    return X


def fit_scale(X: np.ndarray) -> np.ndarray:
    """Per-feature 1/max for non-negative features; all-zero features keep scale 1."""
    peak = np.zeros(X.shape[1])
    for start in range(0, X.shape[1], _COL_CHUNK):
        cols = slice(start, start + _COL_CHUNK)
        peak[cols] = np.abs(X[:, cols]).max(axis=0)
    scale = np.ones_like(peak)
    nz = peak > 0
    scale[nz] = 1.0 / peak[nz]
    return scale


def scaled_gram(X: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Gram matrix of the scaled features with a bias column of ones appended."""
    n = X.shape[0]
    G = np.ones((n, n))
    for start in range(0, X.shape[1], _COL_CHUNK):
        cols = slice(start, start + _COL_CHUNK)
        Xc = X[:, cols].astype(np.float64) * scale[cols]
        G += Xc @ Xc.T
    return G


@numba.njit(cache=True)
def _sweep(Q, diag, alpha, Qa, C, order):
    n = Q.shape[0]
    for t in range(n):
        i = order[t]
        g = Qa[i] - 1.0
        a = alpha[i]
        if (a == 0.0 and g >= 0.0) or (a == C and g <= 0.0):
            continue
        new = min(max(a - g / diag[i], 0.0), C)
        if new != a:
            d = new - a
            for j in range(n):
                Qa[j] += d * Q[i, j]
            alpha[i] = new


def dual_cd(G: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-6,
            max_sweeps: int = 100_000, seed: int = 0) -> tuple[np.ndarray, list[float], float]:
    """Hinge-loss SVM dual ``min 1/2 a'Qa - sum a, 0 <= a <= C`` by coordinate descent.

    Each sweep visits the coordinates in a permutation drawn from a generator
    seeded with ``seed``, so repeated calls are bit-identical. Returns
    ``(alpha, dual_history, gap)``; ``dual_history`` holds the dual objective
    after each sweep.
    """
    n = G.shape[0]
    Q = np.ascontiguousarray(G * np.outer(y, y))
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    Qa = np.zeros(n)
    rng = make_rng(seed)
    history = []
    gap = primal = np.inf
    for _ in range(max_sweeps):
        _sweep(Q, diag, alpha, Qa, C, rng.permutation(n))
        quad = 0.5 * alpha @ Qa
        dual = quad - alpha.sum()
        primal = quad + C * np.maximum(0.0, 1.0 - Qa).sum()
        history.append(dual)
        gap = primal + dual
        if gap <= tol * primal:
            break
    else:
        log.warning("dual coordinate descent hit %d sweeps with relative gap %.3g",
                    max_sweeps, gap / max(primal, 1e-300))
    return alpha, history, gap


def train_linear_ovr(features, labels, lam: float = 1e-3, tol: float = 1e-6,
                     class_count: int | None = None, telemetry: TrainLog | None = None) -> LinearModel:
    X = _as_matrix(features)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError(f"{y.size} labels for {X.shape[0]} feature vectors")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    c = int(class_count if class_count is not None else y.max() + 1)
    if np.unique(y).size < 2:
        raise ValueError("need at least two classes to train a classifier")
    n = X.shape[0]
    scale = fit_scale(X)
    G = scaled_gram(X, scale)
    C = 1.0 / (lam * n)

    coef = np.zeros((c, n))
    for k in range(c):
        yk = np.where(y == k, 1.0, -1.0)
        alpha, history, gap = dual_cd(G, yk, C, tol, seed=k)
        coef[k] = alpha * yk
        if telemetry is not None:
            telemetry.dual_objective.append(history)
            telemetry.duality_gap.append(gap)
            telemetry.sweeps.append(len(history))
        log.debug("class %d: %d sweeps, gap %.3g", k, len(history), gap)

    # w = sum_i coef_i * x~_i ; bias is the weight on the appended constant.
    W = np.zeros((c, X.shape[1]))
    for start in range(0, X.shape[1], _COL_CHUNK):
        cols = slice(start, start + _COL_CHUNK)
        W[:, cols] = coef @ (X[:, cols].astype(np.float64) * scale[cols])
    return LinearModel(W, coef.sum(axis=1), scale)


def predict(model: LinearModel, feature) -> int:
    return int(model.predict(feature)[0])


def evaluate(model: LinearModel, features, labels) -> tuple[float, np.ndarray]:
    """Error rate and confusion matrix (rows: true class, columns: predicted)."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ValueError("no samples")
    pred = model.predict(features)
    return error_metrics(y, pred, model.class_count)


def error_metrics(y_true, y_pred, class_count: int) -> tuple[float, np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    return float(np.count_nonzero(y_true != y_pred) / y_true.size), confusion
