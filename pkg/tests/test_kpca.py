import numpy as np
import pytest
from scipy.linalg import subspace_angles

from kpcanet import kernels
from kpcanet.kernels import KINDS, KernelSpec
from kpcanet.kpca import (InsufficientSpectrumError, KpcaBasis, center_gram, eigensolve_descending,
                          learn_filters, project, reconstruct_linear_filters)

LINEAR = KernelSpec("linear")


def _four_term(K):
    M = K.shape[0]
    one = np.full((M, M), 1.0 / M)
    return K - one @ K - K @ one + one @ K @ one


def test_center_identical_points():
    np.testing.assert_array_equal(center_gram([[1.0, 1.0], [1.0, 1.0]]), np.zeros((2, 2)))


def test_center_hand_example():
    np.testing.assert_allclose(center_gram([[2.0, 0.0], [0.0, 2.0]]), [[1, -1], [-1, 1]], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_center_matches_four_term_formula(kind):
    pts = np.random.default_rng(0).random((15, 6)) * 0.4
    K = kernels.gram(KernelSpec(kind), pts)
    Kc = center_gram(K)
    np.testing.assert_allclose(Kc, _four_term(K), atol=1e-12 * np.abs(K).max())
    tol = 1e-9 * 15 * np.abs(K).max()
    assert np.abs(Kc.sum(axis=0)).max() <= tol and np.abs(Kc.sum(axis=1)).max() <= tol
    assert np.array_equal(Kc, Kc.T)


def test_center_rejects_non_square():
    with pytest.raises(ValueError):
        center_gram(np.zeros((2, 3)))


def test_eigensolve_diagonal():
    vals, vecs = eigensolve_descending(np.diag([2.0, 1.0]), 2)
    np.testing.assert_array_equal(vals, [2.0, 1.0])
    np.testing.assert_array_equal(vecs, np.eye(2))


def test_eigensolve_degenerate_orthonormal():
    vals, vecs = eigensolve_descending(np.eye(3), 2)
    np.testing.assert_allclose(vals, [1.0, 1.0])
    np.testing.assert_allclose(vecs @ vecs.T, np.eye(2), atol=1e-12)


def test_eigensolve_random_residuals_and_signs():
    A = np.random.default_rng(1).normal(size=(20, 20))
    S = A @ A.T
    vals, vecs = eigensolve_descending(S, 6)
    assert np.all(np.diff(vals) <= 0)
    np.testing.assert_allclose(vecs @ vecs.T, np.eye(6), atol=1e-8)
    for lam, v in zip(vals, vecs):
        assert np.abs(S @ v - lam * v).max() <= 1e-8 * abs(lam)
        assert v[np.argmax(np.abs(v))] > 0
    np.testing.assert_allclose(vals, np.linalg.eigvalsh(S)[::-1][:6], rtol=1e-10)


def test_eigensolve_insufficient_spectrum():
    with pytest.raises(InsufficientSpectrumError, match="insufficient positive spectrum") as info:
        eigensolve_descending(np.diag([1.0, 0.0, -3.0]), 2)
    assert info.value.available == 1


def test_learn_filters_rank_after_centering():
    # Centring removes one dimension: L+1 affinely independent patches give L components,
    # L patches give only L-1.
    rng = np.random.default_rng(2)
    L = 5
    pts = rng.random((L + 1, 9))
    basis = learn_filters(pts, LINEAR, L)
    assert basis.num_components == L and np.all(basis.eigenvalues > 0)
    pca = np.linalg.eigvalsh(np.cov(pts.T, bias=True))[::-1][:L] * (L + 1)
    np.testing.assert_allclose(basis.eigenvalues, pca, rtol=1e-9)
    with pytest.raises(InsufficientSpectrumError) as info:
        learn_filters(pts[:L], LINEAR, L)
    assert info.value.available == L - 1


def test_identical_patches_have_no_spectrum():
    with pytest.raises(InsufficientSpectrumError) as info:
        learn_filters(np.tile([0.1, 0.5, 0.2], (10, 1)), KernelSpec("gaussian"), 1)
    assert info.value.available == 0


def test_linear_eigenvalues_are_scaled_pca_variances():
    rng = np.random.default_rng(3)
    X = rng.random((200, 16))
    X -= X.mean(axis=1, keepdims=True)
    basis = learn_filters(X, LINEAR, 6)
    cov = (X - X.mean(axis=0)).T @ (X - X.mean(axis=0)) / 200
    np.testing.assert_allclose(basis.eigenvalues, 200 * np.linalg.eigvalsh(cov)[::-1][:6], rtol=1e-6)


@pytest.mark.parametrize("kind", ["linear", "gaussian", "polynomial", "laplacian", "inverse_multiquadric"])
def test_normalisation_and_training_scores(kind):
    X = np.random.default_rng(4).random((60, 9))
    spec = KernelSpec(kind)
    basis = learn_filters(X, spec, 5)
    np.testing.assert_allclose(basis.eigenvalues * (basis.alphas ** 2).sum(axis=1), 1.0, rtol=1e-12)
    Kc = center_gram(kernels.gram(spec, X))
    scores = project(basis, X)
    np.testing.assert_allclose(scores, basis.alphas @ Kc, atol=1e-8)
    # empirical variance of training scores is lambda / M
    np.testing.assert_allclose(scores.var(axis=1), basis.eigenvalues / 60, rtol=1e-6)


def test_linear_projection_matches_explicit_filters():
    rng = np.random.default_rng(5)
    X, Q = rng.random((80, 12)), rng.random((30, 12))
    basis = learn_filters(X, LINEAR, 4)
    xbar = X.mean(axis=0)
    W = np.array([sum(a * (x - xbar) for a, x in zip(alpha, X)) for alpha in basis.alphas])
    np.testing.assert_allclose(project(basis, Q), W @ (Q - xbar).T, atol=1e-8)
    np.testing.assert_allclose(basis.responses(Q), (Q - xbar) @ W.T, atol=1e-10)


def test_reconstruct_two_points():
    basis = learn_filters([[1.0, 0.0], [0.0, 1.0]], LINEAR, 1)
    w = reconstruct_linear_filters(basis)[0]
    np.testing.assert_allclose(np.abs(w), [2 ** -0.5, 2 ** -0.5], rtol=1e-12)
    assert w[0] * w[1] < 0


def test_reconstructed_filters_orthonormal_and_covariance_orthogonal():
    X = np.random.default_rng(6).random((100, 9))
    W = reconstruct_linear_filters(learn_filters(X, LINEAR, 4))
    np.testing.assert_allclose(W @ W.T, np.eye(4), atol=1e-10)
    cov = np.cov(X.T, bias=True)
    G = W @ cov @ W.T
    assert np.abs(G - np.diag(np.diag(G))).max() < 1e-10
    assert np.all(np.linalg.norm(W, axis=1) > 0)


def test_reconstruct_rejects_nonlinear():
    basis = learn_filters(np.random.default_rng(7).random((10, 4)), KernelSpec("gaussian"), 2)
    with pytest.raises(ValueError, match="no exact input-space filter exists"):
        reconstruct_linear_filters(basis)


def test_pcanet_span_equivalence():
    X = np.random.default_rng(8).random((300, 25))
    W = reconstruct_linear_filters(learn_filters(X, LINEAR, 8))
    Xc = X - X.mean(axis=0)
    _, vecs = np.linalg.eigh(Xc.T @ Xc)
    assert subspace_angles(W.T, vecs[:, ::-1][:, :8]).max() < 1e-6


def test_coefficient_scaling_keeps_score_order():
    X = np.random.default_rng(9).random((40, 6))
    basis = learn_filters(X, KernelSpec("gaussian"), 4)
    scaled = KpcaBasis(basis.kernel, basis.basis_patches, 3.7 * basis.alphas, basis.eigenvalues,
                       basis.basis_col_means, basis.basis_total_mean)
    Q = np.random.default_rng(10).random((25, 6))
    a, b = np.abs(project(basis, Q)), np.abs(project(scaled, Q))
    np.testing.assert_array_equal(np.argsort(a, axis=0, kind="stable"), np.argsort(b, axis=0, kind="stable"))


def test_project_dimension_mismatch():
    basis = learn_filters(np.random.default_rng(0).random((10, 4)), LINEAR, 2)
    with pytest.raises(ValueError):
        project(basis, np.zeros((3, 5)))


def test_basis_is_immutable():
    basis = learn_filters(np.random.default_rng(0).random((10, 4)), LINEAR, 2)
    with pytest.raises(ValueError):
        basis.alphas[0, 0] = 1.0


def test_sigmoid_negative_spectrum_is_never_selected():
    X = np.random.default_rng(12).random((50, 16))
    basis = learn_filters(X, KernelSpec("sigmoid"), 3)
    assert np.all(basis.eigenvalues > 0)


def test_identity_gram_is_handled():
    # circular kernel with points further apart than sigma: K is exactly I
    X = np.random.default_rng(13).random((300, 25))
    basis = learn_filters(X, KernelSpec("circular"), 6)
    np.testing.assert_allclose(basis.eigenvalues, 1.0, rtol=1e-12)
    np.testing.assert_allclose(basis.alphas @ basis.alphas.T, np.eye(6), atol=1e-10)
