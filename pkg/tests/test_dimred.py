import itertools

import numpy as np
import pytest

from leaninfer.dimred import (
    fit_attraction_curve,
    pca,
    smooth_knn_sigmas,
    tsne,
    tsne_conditional_probs,
    umap,
)


def kmeans_best(X, k, seed, restarts=10, iters=100):
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        C = X[rng.choice(len(X), k, replace=False)].copy()
        a = np.zeros(len(X), dtype=int)
        for _ in range(iters):
            d = ((X[:, None, :] - C[None]) ** 2).sum(-1)
            a = d.argmin(1)
            for j in range(k):
                if (a == j).any():
                    C[j] = X[a == j].mean(0)
        inertia = ((X - C[a]) ** 2).sum()
        if inertia < best_inertia:
            best_inertia, best = inertia, a
    return best


def label_agreement(assign, labels, k):
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapped = np.array([perm[a] for a in assign])
        best = max(best, float((mapped == labels).mean()))
    return best


def three_blobs(seed=0, n_per=20, sigma=0.1, sep=10.0, d=20):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(3, d))
    centers = centers / np.linalg.norm(centers, axis=1, keepdims=True) * sep
    X = np.vstack([rng.normal(c, sigma, (n_per, d)) for c in centers])
    return X, np.repeat(np.arange(3), n_per)


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def test_pca_line_captures_all_variance():
    rng = np.random.default_rng(1)
    t = rng.normal(size=50)
    direction = np.array([1.0, -2.0, 0.5, 3.0, -1.0])
    X = np.outer(t, direction)
    with pytest.warns(UserWarning, match="rank"):
        red = pca(X, 2)
    var = red.coords.var(axis=0)
    assert var[0] > 0
    assert var[1] == 0.0


def brute_force_eig3(cov):
    """Characteristic-polynomial eigensolver for a 3x3 symmetric matrix."""
    c2 = -np.trace(cov)
    c1 = 0.5 * (np.trace(cov) ** 2 - np.trace(cov @ cov))
    c0 = -np.linalg.det(cov)
    roots = np.roots([1.0, c2, c1, c0])
    roots = np.sort(roots.real)[::-1]
    vecs = []
    for lam in roots:
        A = cov - lam * np.eye(3)
        # null vector via cross products of rows
        candidates = [np.cross(A[0], A[1]), np.cross(A[0], A[2]), np.cross(A[1], A[2])]
        v = max(candidates, key=lambda c: np.linalg.norm(c))
        vecs.append(v / np.linalg.norm(v))
    return roots, np.column_stack(vecs)


def test_pca_matches_characteristic_polynomial_oracle():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 3)) @ np.diag([3.0, 1.0, 0.2]) + rng.normal(size=3)
    red = pca(X, 2)
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (len(X) - 1)
    vals, vecs = brute_force_eig3(cov)
    for c in range(2):
        v = vecs[:, c]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        expected = Xc @ v
        assert np.max(np.abs(red.coords[:, c] - expected)) < 1e-8


def test_pca_matches_svd_oracle_on_random_matrices():
    rng = np.random.default_rng(3)
    for trial in range(20):
        X = rng.normal(size=(10, 5))
        red = pca(X, 2)
        Xc = X - X.mean(axis=0)
        U, S, Vt = np.linalg.svd(Xc, full_matrices=False)
        W = Vt[:2].T
        for c in range(2):
            v = W[:, c]
            if v[np.argmax(np.abs(v))] < 0:
                v = -v
            expected = Xc @ v
            assert np.max(np.abs(red.coords[:, c] - expected)) < 1e-8, f"trial {trial}"


def test_pca_components_ordered_and_uncorrelated():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 8)) * np.array([5, 4, 3, 2, 1, 1, 1, 1])
    red = pca(X, 2)
    var = red.coords.var(axis=0)
    assert var[0] >= var[1]
    corr = np.corrcoef(red.coords.T)[0, 1]
    assert abs(corr) < 1e-8


def test_pca_row_permutation_equivariance():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 6))
    perm = rng.permutation(40)
    red = pca(X, 2)
    red_p = pca(X[perm], 2)
    assert np.allclose(red_p.coords, red.coords[perm], atol=1e-12)


def test_pca_input_validation():
    with pytest.raises(ValueError):
        pca(np.zeros((2, 5)), 2)
    with pytest.raises(ValueError):
        pca(np.zeros((10, 1)), 2)


# ---------------------------------------------------------------------------
# t-SNE
# ---------------------------------------------------------------------------

def test_tsne_bisection_hits_entropy_target():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(100, 10))
    sq = (X * X).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0)
    perplexity = 12.0
    P, betas = tsne_conditional_probs(D2, perplexity)
    target_bits = np.log2(perplexity)
    for i in range(100):
        row = P[i][P[i] > 0]
        h_bits = -(row * np.log2(row)).sum()
        assert abs(h_bits - target_bits) < 1e-3


def test_tsne_recovers_blobs():
    scores = []
    for seed in range(5):
        X, labels = three_blobs(seed=seed)
        red = tsne(X, perplexity=10.0, seed=seed)
        assign = kmeans_best(red.coords, 3, seed)
        scores.append(label_agreement(assign, labels, 3))
    assert np.median(scores) >= 0.95


def test_tsne_kl_decreases_after_exaggeration():
    X, _ = three_blobs(seed=9)
    red = tsne(X, perplexity=10.0, seed=2)
    assert red.params["kl_final"] < red.params["kl_after_exaggeration"]


def test_tsne_requires_enough_points():
    with pytest.raises(ValueError, match="perplexity"):
        tsne(np.random.default_rng(0).normal(size=(50, 5)), perplexity=30.0)


def test_tsne_deterministic():
    X, _ = three_blobs(seed=10, n_per=12)
    r1 = tsne(X, perplexity=8.0, iterations=300, seed=3)
    r2 = tsne(X, perplexity=8.0, iterations=300, seed=3)
    assert np.array_equal(r1.coords, r2.coords)


# ---------------------------------------------------------------------------
# UMAP-style layout
# ---------------------------------------------------------------------------

def test_umap_sigma_bisection_target():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(80, 10))
    sq = (X * X).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0)
    np.fill_diagonal(D2, np.inf)
    D = np.sqrt(D2)
    k = 15
    nn = np.argsort(D, axis=1)[:, :k]
    knn_d = np.take_along_axis(D, nn, axis=1)
    rho, sigma = smooth_knn_sigmas(knn_d, k)
    target = np.log2(k)
    for i in range(80):
        total = np.exp(-np.maximum(knn_d[i] - rho[i], 0.0) / sigma[i]).sum()
        assert abs(total - target) < 1e-3


def test_umap_curve_fit_reference_values():
    a, b = fit_attraction_curve(0.1)
    # reference values for min_dist=0.1, spread=1.0
    assert abs(a - 1.577) < 0.02
    assert abs(b - 0.8951) < 0.005


def test_umap_recovers_blobs():
    scores = []
    for seed in range(5):
        X, labels = three_blobs(seed=seed)
        red = umap(X, seed=seed)
        assign = kmeans_best(red.coords, 3, seed)
        scores.append(label_agreement(assign, labels, 3))
    assert np.median(scores) >= 0.95


def test_umap_deterministic():
    X, _ = three_blobs(seed=14, n_per=12)
    r1 = umap(X, n_neighbors=10, seed=5)
    r2 = umap(X, n_neighbors=10, seed=5)
    assert np.array_equal(r1.coords, r2.coords)
    r3 = umap(X, n_neighbors=10, seed=6)
    assert not np.array_equal(r1.coords, r3.coords)


def test_umap_requires_enough_points():
    with pytest.raises(ValueError, match="n_neighbors"):
        umap(np.zeros((10, 3)), n_neighbors=15)
