"""Kernel PCA filter learning and out-of-sample projection.

Learned components live in the kernel feature space. A component is applied
to a patch ``x`` by the centred kernel expansion

    score_l(x) = sum_p alpha[l, p] * (k(x, x_p) - mean_r k(x, x_r)
                                      - colmean[p] + totalmean)

over the retained training patches ``x_p``. For the linear kernel this is
exactly ``(x - xbar) . w_l`` with ``w_l = sum_p alpha[l, p] (x_p - xbar)``,
which is an ordinary spatial filter.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from . import kernels
from .kernels import KernelSpec

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-10
# Cap on the number of kernel entries held at once during projection.
_PROJECT_CHUNK = 4_000_000


class InsufficientSpectrumError(ArithmeticError):
    def __init__(self, wanted: int, available: int):
        self.wanted = wanted
        self.available = available
        super().__init__(
            f"insufficient positive spectrum: {wanted} components requested, "
            f"{available} strictly positive eigenvalues available")


def center_gram(K) -> np.ndarray:
    """Double-centre a Gram matrix: ``K - 1K - K1 + 1K1`` with ``1 = ones/M``."""
    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {K.shape}")
    col_means = K.mean(axis=0)
    row_means = K.mean(axis=1)
    Kc = K - col_means[None, :] - row_means[:, None] + K.mean()
    if np.array_equal(K, K.T):
        upper = np.triu_indices_from(Kc, k=1)
        Kc.T[upper] = Kc[upper]
    return Kc


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # Rows: make the largest-magnitude entry positive (first one on ties).
    pivots = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), pivots])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def eigensolve_descending(S, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-``L`` eigenpairs of a symmetric matrix, largest first.

    Returns ``(values, vectors)`` with ``vectors`` of shape ``(L, M)`` (one
    eigenvector per row). Raises :class:`InsufficientSpectrumError` unless all
    ``L`` values exceed ``1e-10 * max|lambda|``.
    """
    S = np.asarray(S, dtype=np.float64)
    M = S.shape[0]
    if S.ndim != 2 or S.shape[1] != M:
        raise ValueError("matrix must be square")
    if not 1 <= L <= M:
        raise ValueError(f"L must be in [1, {M}], got {L}")
    try:
        vals, vecs = linalg.eigh(S, subset_by_index=[M - L, M - 1])
    except linalg.LinAlgError:
        vals = np.empty(0)
    if vals.shape != (L,):
        # The subset driver can fail on massively repeated eigenvalues (for
        # instance a Gram matrix that is exactly the identity); the full
        # divide-and-conquer solve does not.
        vals, vecs = linalg.eigh(S, driver="evd")
        vals, vecs = vals[M - L:], vecs[:, M - L:]
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order].T

    # max|lambda| needs the bottom of the spectrum only when Gershgorin cannot
    # rule out a large negative eigenvalue.
    top = max(vals[0], 0.0)
    bound = max(top, np.abs(S).sum(axis=1).max())
    if not vals[-1] > EIGEN_FLOOR * bound:
        lowest = linalg.eigh(S, eigvals_only=True, subset_by_index=[0, 0])[0]
        scale = max(top, -lowest)
        tol = EIGEN_FLOOR * scale
        if scale == 0 or not vals[-1] > tol:
            all_vals = linalg.eigvalsh(S)
            raise InsufficientSpectrumError(L, int(np.count_nonzero(all_vals > tol)) if scale else 0)
    return vals, _fix_signs(vecs)


@dataclass(frozen=True, eq=False)
class KpcaBasis:
    kernel: KernelSpec
    basis_patches: np.ndarray  # (M, D)
    alphas: np.ndarray         # (L, M)
    eigenvalues: np.ndarray    # (L,)
    basis_col_means: np.ndarray  # (M,)
    basis_total_mean: float

    def __post_init__(self):
        for name in ("basis_patches", "alphas", "eigenvalues", "basis_col_means"):
            arr = np.array(getattr(self, name), dtype=np.float64, copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "basis_total_mean", float(self.basis_total_mean))
        L, M = self.alphas.shape
        if self.basis_patches.shape[0] != M or self.basis_col_means.shape != (M,):
            raise ValueError("basis arrays disagree on the number of retained patches")
        if self.eigenvalues.shape != (L,):
            raise ValueError("one eigenvalue per component required")

    @property
    def num_components(self) -> int:
        return self.alphas.shape[0]

    @property
    def patch_dim(self) -> int:
        return self.basis_patches.shape[1]

    @cached_property
    def _alpha_sums(self) -> np.ndarray:
        return self.alphas.sum(axis=1)

    @cached_property
    def _offset(self) -> np.ndarray:
        return self.basis_total_mean * self._alpha_sums - self.alphas @ self.basis_col_means

    @cached_property
    def _linear_form(self) -> tuple[np.ndarray, np.ndarray]:
        mean = self.basis_patches.mean(axis=0)
        W = reconstruct_linear_filters(self)
        return mean, W

    def responses(self, queries: np.ndarray) -> np.ndarray:
        """Component scores of shape ``(Q, L)``; exact closed form for linear kernels."""
        queries = np.asarray(queries, dtype=np.float64)
        if queries.shape[-1] != self.patch_dim:
            raise ValueError(f"patch dimension mismatch: {queries.shape[-1]} vs {self.patch_dim}")
        if self.kernel.kind == "linear":
            mean, W = self._linear_form
            return (queries - mean) @ W.T
        return project(self, queries).T


def learn_filters(patches, kernel: KernelSpec, L: int) -> KpcaBasis:
    """Fit ``L`` kernel principal components on a patch set ``(M, D)``."""
    X = np.asarray(patches, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("patches must be a non-empty (M, D) array")
    if not np.all(np.isfinite(X)):
        raise ValueError("patches contain non-finite values")
    M = X.shape[0]
    if L > M:
        raise ValueError(f"cannot extract {L} components from {M} patches")
    K = kernels.gram(kernel, X)
    col_means = K.mean(axis=0)
    total = K.mean()
    vals, vecs = eigensolve_descending(center_gram(K), L)
    alphas = vecs / np.sqrt(vals)[:, None]
    log.debug("learned %d %s components from %d patches; top eigenvalue %.4g",
              L, kernel.kind, M, vals[0])
    return KpcaBasis(kernel, X, alphas, vals, col_means, total)


def project(basis: KpcaBasis, queries) -> np.ndarray:
    """Out-of-sample scores of shape ``(L, Q)`` via the centred kernel expansion."""
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[None, :]
    if Q.shape[1] != basis.patch_dim:
        raise ValueError(f"patch dimension mismatch: {Q.shape[1]} vs {basis.patch_dim}")
    M = basis.basis_patches.shape[0]
    out = np.empty((basis.num_components, Q.shape[0]))
    step = max(1, _PROJECT_CHUNK // M)
    for start in range(0, Q.shape[0], step):
        stop = min(start + step, Q.shape[0])
        Kq = kernels.cross_gram(basis.kernel, basis.basis_patches, Q[start:stop])
        out[:, start:stop] = (basis.alphas @ Kq
                              - np.outer(basis._alpha_sums, Kq.mean(axis=0))
                              + basis._offset[:, None])
    return out


def reconstruct_linear_filters(basis: KpcaBasis) -> np.ndarray:
    """Explicit filters ``(L, D)`` for a linear-kernel basis."""
    if basis.kernel.kind != "linear":
        raise ValueError(f"no exact input-space filter exists for the {basis.kernel.kind} kernel")
    centred = basis.basis_patches - basis.basis_patches.mean(axis=0)
    return basis.alphas @ centred
