"""Reduce embeddings to 2-d for few-shot classification and plotting.

All three methods are exact, desk-scale implementations: PCA by
eigendecomposition of the sample covariance, t-SNE with per-point bandwidth
bisection and the exact KL gradient, and a fuzzy-neighborhood cross-entropy
layout with exact kNN. t-SNE and the neighborhood layout are seeded and
deterministic; both use PCA coordinates as the initial state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from ._rng import derive_seed
from .embedding import EmbeddingMatrix


@dataclass
class ReducedMatrix:
    coords: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    source: str = ""

    def to_embedding(self, ids: list[str]) -> EmbeddingMatrix:
        meta = {"method": self.method, "params": _jsonable(self.params), "source": self.source}
        return EmbeddingMatrix(ids, self.coords, meta)


def _jsonable(params: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating, float)) else v)
            for k, v in params.items() if not isinstance(v, np.ndarray)}


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def pca(X: np.ndarray, k: int = 2, source: str = "") -> ReducedMatrix:
    """Project onto the top-k eigenvectors of the sample covariance.

    Components are ordered by descending eigenvalue and sign-fixed so the
    largest-magnitude entry of each eigenvector is positive. If the data has
    rank below k the trailing components are zero-filled with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n <= k:
        raise ValueError(f"need more than {k} rows, got {n}")
    if d < k:
        raise ValueError(f"need at least {k} input dims, got {d}")
    Xc = X - X.mean(axis=0)
    cov = (Xc.T @ Xc) / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    vals = eigvals[order]
    W = eigvecs[:, order]
    rank_floor = max(vals.max(), 0.0) * 1e-12
    for c in range(k):
        j = np.argmax(np.abs(W[:, c]))
        if W[j, c] < 0:
            W[:, c] = -W[:, c]
    Y = Xc @ W
    deficient = vals <= rank_floor
    if deficient.any():
        Y[:, deficient] = 0.0
        warnings.warn(f"covariance rank below {k}; zero-filled {int(deficient.sum())} component(s)")
    return ReducedMatrix(Y, "pca", {"k": k, "explained_variance": vals}, source)


# ---------------------------------------------------------------------------
# t-SNE
# ---------------------------------------------------------------------------

def tsne_conditional_probs(D2: np.ndarray, perplexity: float, max_steps: int = 200):
    """Bisect per-point precisions so each conditional distribution has
    Shannon entropy log(perplexity); returns (P_cond, betas)."""
    n = D2.shape[0]
    P = np.zeros((n, n))
    betas = np.ones(n)
    target = np.log(perplexity)
    failures = _bisect_betas(D2, target, max_steps, P, betas)
    if failures:
        warnings.warn(f"perplexity bisection did not converge for {failures} point(s); using closest bandwidth")
    return P, betas


@njit(cache=True, nogil=True)
def _bisect_betas(D2, target, max_steps, P, betas):
    n = D2.shape[0]
    failures = 0
    for i in range(n):
        lo = 0.0
        hi = np.inf
        beta = 1.0
        h = 0.0
        for _ in range(max_steps):
            psum = 0.0
            for j in range(n):
                if j != i:
                    P[i, j] = np.exp(-D2[i, j] * beta)
                    psum += P[i, j]
                else:
                    P[i, j] = 0.0
            if psum <= 0.0:
                psum = 1e-300
            hsum = 0.0
            for j in range(n):
                if j != i and P[i, j] > 0:
                    pij = P[i, j] / psum
                    hsum -= pij * np.log(pij)
            h = hsum
            if abs(h - target) < 1e-5:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (lo + hi) / 2.0
            else:
                hi = beta
                beta = (lo + hi) / 2.0
        else:
            failures += 1
        psum = 0.0
        for j in range(n):
            psum += P[i, j]
        if psum > 0:
            for j in range(n):
                P[i, j] /= psum
        betas[i] = beta
    return failures


@njit(cache=True, nogil=True)
def _tsne_grad(P, Y, grad):
    """Exact KL gradient; returns current KL(P || Q)."""
    n = Y.shape[0]
    num = np.zeros((n, n))
    qsum = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            dx = Y[i, 0] - Y[j, 0]
            dy = Y[i, 1] - Y[j, 1]
            v = 1.0 / (1.0 + dx * dx + dy * dy)
            num[i, j] = v
            num[j, i] = v
            qsum += 2.0 * v
    kl = 0.0
    for i in range(n):
        gx = 0.0
        gy = 0.0
        for j in range(n):
            if j == i:
                continue
            q = num[i, j] / qsum
            if q < 1e-12:
                q = 1e-12
            mult = (P[i, j] - q) * num[i, j]
            gx += mult * (Y[i, 0] - Y[j, 0])
            gy += mult * (Y[i, 1] - Y[j, 1])
            if P[i, j] > 1e-12:
                kl += P[i, j] * np.log(P[i, j] / q)
        grad[i, 0] = 4.0 * gx
        grad[i, 1] = 4.0 * gy
    return kl


def tsne(
    X: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    source: str = "",
) -> ReducedMatrix:
    """Standard exact t-SNE with early exaggeration and momentum switching.

    Early exaggeration multiplies P by 12 for the first 250 iterations;
    momentum steps from 0.5 to 0.8 at iteration 250. Initialization is the
    2-d PCA projection scaled to standard deviation 1e-4.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n <= 3 * perplexity:
        raise ValueError(f"need n > 3*perplexity ({3 * perplexity:.0f}), got {n}")
    sq = (X * X).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    Pc, _ = tsne_conditional_probs(D2, perplexity)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    Y = pca(X, 2).coords
    Y = Y * (1e-4 / max(Y.std(), 1e-30))
    # seed only perturbs degenerate PCA initializations (all-equal rows)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 0x75E)))
    if Y.std() == 0.0:
        Y = rng.normal(scale=1e-4, size=(n, 2))

    grad = np.zeros((n, 2))
    inc = np.zeros((n, 2))
    gains = np.ones((n, 2))
    exaggeration = 12.0
    stop_exagg = min(250, iterations)
    kl_at_switch = np.nan
    kl = np.nan
    P_run = P * exaggeration
    for it in range(iterations):
        if it == stop_exagg:
            P_run = P
        kl = _tsne_grad(P_run, Y, grad)
        if it == stop_exagg:
            kl_at_switch = kl
        momentum = 0.5 if it < 250 else 0.8
        same_sign = np.sign(grad) == np.sign(inc)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        inc = momentum * inc - learning_rate * gains * grad
        Y = Y + inc
        Y = Y - Y.mean(axis=0)
    kl_final = _tsne_grad(P, Y, grad)
    params = {
        "perplexity": perplexity,
        "iterations": iterations,
        "learning_rate": learning_rate,
        "seed": seed,
        "kl_after_exaggeration": kl_at_switch,
        "kl_final": kl_final,
    }
    return ReducedMatrix(Y, "tsne", params, source)


# ---------------------------------------------------------------------------
# fuzzy-neighborhood cross-entropy layout (UMAP)
# ---------------------------------------------------------------------------

def smooth_knn_sigmas(knn_d: np.ndarray, n_neighbors: int, tol: float = 1e-6,
                      max_steps: int = 200):
    """Per-point (rho, sigma): rho is the nearest-neighbor distance and sigma
    solves sum_j exp(-max(0, d_ij - rho_i)/sigma_i) = log2(n_neighbors)."""
    n = knn_d.shape[0]
    rho = knn_d[:, 0].copy()
    sigma = np.ones(n)
    target = np.log2(n_neighbors)
    _bisect_sigmas(knn_d, rho, target, tol, max_steps, sigma)
    return rho, sigma


@njit(cache=True, nogil=True)
def _bisect_sigmas(knn_d, rho, target, tol, max_steps, sigma):
    n, k = knn_d.shape
    for i in range(n):
        lo = 0.0
        hi = np.inf
        mid = 1.0
        for _ in range(max_steps):
            psum = 0.0
            for j in range(k):
                d = knn_d[i, j] - rho[i]
                psum += np.exp(-d / mid) if d > 0 else 1.0
            if abs(psum - target) < tol:
                break
            if psum > target:
                hi = mid
                mid = (lo + hi) / 2.0
            else:
                lo = mid
                mid = mid * 2.0 if hi == np.inf else (lo + hi) / 2.0
        sigma[i] = mid


def fit_attraction_curve(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Fit (a, b) of 1/(1 + a d^(2b)) to the target membership curve."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xv = np.linspace(0, spread * 3, 300)
    yv = np.ones_like(xv)
    mask = xv >= min_dist
    yv[mask] = np.exp(-(xv[mask] - min_dist) / spread)
    (a, b), _ = curve_fit(curve, xv, yv)
    return float(a), float(b)


@njit(cache=True, nogil=True)
def _umap_sgd(Y, heads, tails, epochs_per_sample, a, b, epochs, neg_rate, seed):
    n = Y.shape[0]
    m = heads.shape[0]
    next_sample = epochs_per_sample.copy()
    eps_neg = epochs_per_sample / neg_rate
    next_neg = eps_neg.copy()
    state = np.uint64(seed)
    for epoch in range(epochs):
        alpha = 1.0 - epoch / epochs
        for e in range(m):
            if next_sample[e] > epoch:
                continue
            i = heads[e]
            j = tails[e]
            dx = Y[i, 0] - Y[j, 0]
            dy = Y[i, 1] - Y[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                coef = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b)
                gx = _clip4(coef * dx) * alpha
                gy = _clip4(coef * dy) * alpha
                Y[i, 0] += gx
                Y[i, 1] += gy
                Y[j, 0] -= gx
                Y[j, 1] -= gy
            next_sample[e] += epochs_per_sample[e]
            n_negs = int((epoch - next_neg[e]) / eps_neg[e]) + 1
            if n_negs < 0:
                n_negs = 0
            for _ in range(n_negs):
                state += np.uint64(0x9E3779B97F4A7C15)
                z = state
                z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                z = z ^ (z >> np.uint64(31))
                t = int((np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)) * n)
                if t >= n:
                    t = n - 1
                if t == i or t == j:
                    continue
                dx = Y[i, 0] - Y[t, 0]
                dy = Y[i, 1] - Y[t, 1]
                d2 = dx * dx + dy * dy
                if d2 > 0.0:
                    coef = (2.0 * b) / ((0.001 + d2) * (1.0 + a * d2**b))
                    Y[i, 0] += _clip4(coef * dx) * alpha
                    Y[i, 1] += _clip4(coef * dy) * alpha
                else:
                    Y[i, 0] += 4.0 * alpha
            next_neg[e] += n_negs * eps_neg[e]


@njit(cache=True, nogil=True, inline="always")
def _clip4(x):
    if x > 4.0:
        return 4.0
    if x < -4.0:
        return -4.0
    return x


def umap(
    X: np.ndarray,
    n_neighbors: int = 15,
    min_dist: float = 0.1,
    epochs: int = 200,
    seed: int = 0,
    source: str = "",
) -> ReducedMatrix:
    """Fuzzy-neighborhood 2-d layout: exact kNN graph, smoothed memberships
    combined by fuzzy union, optimized by sampled attraction/repulsion SGD
    (negative sampling rate 5). Deterministic given the seed; initialized from
    the PCA projection instead of a spectral embedding."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n <= n_neighbors:
        raise ValueError(f"need n > n_neighbors ({n_neighbors}), got {n}")
    sq = (X * X).sum(axis=1)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (X @ X.T), 0.0)
    np.fill_diagonal(D2, np.inf)
    D = np.sqrt(D2)
    nn_idx = np.argsort(D, axis=1, kind="stable")[:, :n_neighbors]
    knn_d = np.take_along_axis(D, nn_idx, axis=1)
    rho, sigma = smooth_knn_sigmas(knn_d, n_neighbors)

    w = np.exp(-np.maximum(knn_d - rho[:, None], 0.0) / sigma[:, None])
    rows = np.repeat(np.arange(n), n_neighbors)
    cols = nn_idx.ravel()
    W = np.zeros((n, n))
    W[rows, cols] = w.ravel()
    W = W + W.T - W * W.T  # fuzzy set union
    # both directions of every symmetric entry are sampled, matching the
    # reference scheme (attraction moves both ends; negatives hit the head)
    heads, tails = np.nonzero(W > 0)
    weights = W[heads, tails]

    a, b = fit_attraction_curve(min_dist)
    eps = np.full(len(weights), np.inf)
    nz = weights > 0
    eps[nz] = float(epochs) / (epochs * (weights[nz] / weights.max()))

    Y = pca(X, 2).coords
    Y = Y * (10.0 / max(np.abs(Y).max(), 1e-30))
    _umap_sgd(Y, heads.astype(np.int64), tails.astype(np.int64), eps, a, b,
              epochs, 5.0, np.uint64(derive_seed(seed, 0x0AB)))
    params = {
        "n_neighbors": n_neighbors,
        "min_dist": min_dist,
        "epochs": epochs,
        "seed": seed,
        "a": a,
        "b": b,
    }
    return ReducedMatrix(Y, "umap", params, source)


REDUCERS = {"pca": pca, "tsne": tsne, "umap": umap}
