"""Supervised multi-class classifiers over user representations.

Six families: multinomial logistic regression, Gaussian naive Bayes, linear /
polynomial / RBF support-vector machines (one-vs-rest, trained by sequential
minimal optimization), and a random forest of CART trees. All are deterministic
given the spec seed; ties in predicted scores resolve to the lowest class
index. Models serialize to versioned JSON and reload bit-exact.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange
from scipy.optimize import minimize

from ._rng import derive_seed

MODEL_FORMAT_VERSION = 1

FAMILIES = ("logreg", "gnb", "svm_linear", "svm_poly", "svm_rbf", "random_forest")


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    seed: int = 0
    c: float = 1.0                 # inverse regularization (logreg) / box constraint (SVM)
    tol: float = 1e-4              # logreg gradient tolerance
    max_iter: int = 1000           # logreg iteration cap
    poly_degree: int = 3
    coef0: float = 0.0
    smo_tol: float = 1e-3
    smo_max_passes: int = 10_000   # SMO pair-update cap
    n_trees: int = 100
    bootstrap: bool = True
    max_depth: int = 0             # 0 = unlimited
    var_smoothing: float = 1e-9

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.c <= 0 or self.n_trees < 1:
            raise ValueError("c must be positive and n_trees >= 1")


@dataclass
class TrainedModel:
    family: str
    classes: list
    params: dict = field(default_factory=dict)
    spec: ClassifierSpec | None = None

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, np.ndarray):
                return {"__nd__": v.dtype.str, "shape": list(v.shape), "data": v.ravel().tolist()}
            if isinstance(v, list):
                return [enc(x) for x in v]
            if isinstance(v, dict):
                return {k: enc(x) for k, x in v.items()}
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "format_version": MODEL_FORMAT_VERSION,
            "family": self.family,
            "classes": list(self.classes),
            "params": enc(self.params),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainedModel":
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {doc.get('format_version')!r}")

        def dec(v):
            if isinstance(v, dict) and "__nd__" in v:
                return np.array(v["data"], dtype=np.dtype(v["__nd__"])).reshape(v["shape"])
            if isinstance(v, list):
                return [dec(x) for x in v]
            if isinstance(v, dict):
                return {k: dec(x) for k, x in v.items()}
            return v

        return cls(doc["family"], list(doc["classes"]), dec(doc["params"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _encode_labels(y) -> tuple[list, np.ndarray]:
    classes = sorted(set(y))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[v] for v in y], dtype=np.int64)


def fit(spec: ClassifierSpec, X: np.ndarray, y, warm_start=None) -> TrainedModel:
    """Train one classifier; deterministic given spec.seed.

    Single-class input degenerates to a constant predictor with a warning;
    non-finite features are rejected.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("X must be a non-empty (n, d) matrix")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or Inf")
    if len(y) != X.shape[0]:
        raise ValueError("X and y length mismatch")
    classes, yi = _encode_labels(y)
    if len(classes) == 1:
        warnings.warn(f"single-class training set ({classes[0]!r}); fitting constant predictor")
        return TrainedModel("constant", classes, {"d": X.shape[1]}, spec)

    if spec.family == "logreg":
        params = _fit_logreg(spec, X, yi, len(classes), warm_start)
    elif spec.family == "gnb":
        params = _fit_gnb(spec, X, yi, len(classes))
    elif spec.family.startswith("svm_"):
        params = _fit_svm_ovr(spec, X, yi, len(classes))
    else:
        params = _fit_forest(spec, X, yi, len(classes))
    return TrainedModel(spec.family, classes, params, spec)


def predict(model: TrainedModel, X: np.ndarray):
    """Argmax of decision_scores; ties go to the lowest class index."""
    scores = decision_scores(model, X)
    return [model.classes[i] for i in np.argmax(scores, axis=1)]


def decision_scores(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Per-class score matrix: probabilities (rows sum to 1) for logreg, gnb
    and random_forest; one-vs-rest margins for the SVM families."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if model.family == "constant":
        if X.shape[1] != model.params["d"]:
            raise ValueError("feature dimension mismatch")
        return np.ones((X.shape[0], 1))
    if model.family == "logreg":
        return _scores_logreg(model.params, X)
    if model.family == "gnb":
        return _scores_gnb(model.params, X)
    if model.family.startswith("svm_") :
        return _scores_svm(model.params, X)
    if model.family == "random_forest":
        return _scores_forest(model.params, X)
    raise ValueError(f"unknown model family {model.family!r}")


# ---------------------------------------------------------------------------
# multinomial logistic regression
# ---------------------------------------------------------------------------

def logreg_loss_grad(wflat: np.ndarray, X1: np.ndarray, onehot: np.ndarray, c: float):
    """L2-penalized multinomial cross-entropy and its gradient.

    Weights are (K, d+1) flattened, last column is the unpenalized intercept.
    """
    n, d1 = X1.shape
    k = onehot.shape[1]
    W = wflat.reshape(k, d1)
    z = X1 @ W.T
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    prob = ez / ez.sum(axis=1, keepdims=True)
    ll = -np.sum(onehot * np.log(np.maximum(prob, 1e-300)))
    pen = 0.5 * np.sum(W[:, :-1] ** 2)
    grad = c * (prob - onehot).T @ X1
    grad[:, :-1] += W[:, :-1]
    return pen + c * ll, grad.ravel()


def _fit_logreg(spec, X, yi, k, warm_start):
    n, d = X.shape
    X1 = np.hstack([X, np.ones((n, 1))])
    onehot = np.zeros((n, k))
    onehot[np.arange(n), yi] = 1.0
    w0 = np.zeros(k * (d + 1)) if warm_start is None else np.asarray(warm_start).ravel().copy()
    res = minimize(
        logreg_loss_grad, w0, args=(X1, onehot, spec.c), jac=True, method="L-BFGS-B",
        options={"maxiter": spec.max_iter, "gtol": spec.tol, "ftol": 1e-12},
    )
    return {"weights": res.x.reshape(k, d + 1), "converged": bool(res.success)}


def _scores_logreg(params, X):
    W = params["weights"]
    z = np.hstack([X, np.ones((X.shape[0], 1))]) @ W.T
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

def _fit_gnb(spec, X, yi, k):
    n, d = X.shape
    eps = spec.var_smoothing * max(X.var(axis=0).max(), 0.0)
    means = np.zeros((k, d))
    variances = np.zeros((k, d))
    priors = np.zeros(k)
    for c in range(k):
        rows = X[yi == c]
        priors[c] = len(rows) / n
        means[c] = rows.mean(axis=0)
        variances[c] = rows.var(axis=0) + eps
    return {"means": means, "variances": variances, "priors": priors, "epsilon": eps}


def _scores_gnb(params, X):
    means, variances, priors = params["means"], params["variances"], params["priors"]
    if X.shape[1] != means.shape[1]:
        raise ValueError("feature dimension mismatch")
    ll = np.empty((X.shape[0], means.shape[0]))
    for c in range(means.shape[0]):
        ll[:, c] = (
            -0.5 * np.sum(np.log(2.0 * np.pi * variances[c]))
            - 0.5 * np.sum((X - means[c]) ** 2 / variances[c], axis=1)
            + np.log(priors[c])
        )
    ll -= ll.max(axis=1, keepdims=True)
    el = np.exp(ll)
    return el / el.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# support-vector machines (SMO, one-vs-rest)
# ---------------------------------------------------------------------------

def _gram(Xa, Xb, family, gamma, degree, coef0):
    lin = Xa @ Xb.T
    if family == "svm_linear":
        return lin
    if family == "svm_poly":
        return (gamma * lin + coef0) ** degree
    sa = (Xa * Xa).sum(axis=1)
    sb = (Xb * Xb).sum(axis=1)
    return np.exp(-gamma * np.maximum(sa[:, None] + sb[None, :] - 2.0 * lin, 0.0))


@njit(cache=True, nogil=True, boundscheck=False)
def smo_solve(K, y, c, tol, max_updates):
    """Two-variable SMO with second-order working-set selection.

    K is the kernel matrix, y in {-1, +1}. Returns (alpha, b, updates).
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)  # dual gradient: sum_b y_a y_b K_ab alpha_b - 1
    updates = 0
    tau = 1e-12
    while updates < max_updates:
        # first index: maximal violation among the "can increase" set
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < c) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > gmax:
                    gmax = v
                    i = t
        # second index: best second-order decrease among the "can decrease" set
        gmin = np.inf
        j = -1
        best_dec = 0.0
        if i >= 0:
            for t in range(n):
                if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < c):
                    v = -y[t] * G[t]
                    if v < gmin:
                        gmin = v
                    diff = gmax - v
                    if diff > 0:
                        quad = K[i, i] + K[t, t] - 2.0 * y[i] * y[t] * K[i, t]
                        if quad <= 0:
                            quad = tau
                        dec = diff * diff / quad
                        if dec > best_dec:
                            best_dec = dec
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        qii = K[i, i]
        qjj = K[j, j]
        qij = y[i] * y[j] * K[i, j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        if y[i] != y[j]:
            quad = qii + qjj + 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
        else:
            quad = qii + qjj - 2.0 * qij
            if quad <= 0:
                quad = tau
            delta = (G[i] - G[j]) / quad
            ssum = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if ssum > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = ssum - c
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = ssum - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = ssum
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = ssum
        dai = (alpha[i] - old_ai) * y[i]
        daj = (alpha[j] - old_aj) * y[j]
        for t in range(n):
            G[t] += y[t] * (K[t, i] * dai + K[t, j] * daj)
        updates += 1

    # intercept from the final KKT interval midpoint (free SVs collapse it)
    ub = np.inf
    lb = -np.inf
    free_sum = 0.0
    free_cnt = 0
    for t in range(n):
        v = -y[t] * G[t]  # equals y_t - f_hat(t) since G = y*f_hat - 1
        if 0.0 < alpha[t] < c:
            free_sum += v
            free_cnt += 1
        elif (y[t] > 0 and alpha[t] <= 0.0) or (y[t] < 0 and alpha[t] >= c):
            if v > lb:
                lb = v
        else:
            if v < ub:
                ub = v
    if free_cnt > 0:
        b = free_sum / free_cnt
    elif np.isfinite(lb) and np.isfinite(ub):
        b = (lb + ub) / 2.0
    else:
        b = 0.0
    return alpha, b, updates


def _fit_svm_ovr(spec, X, yi, k):
    n, d = X.shape
    var = X.var()
    gamma = 1.0 / (d * var) if var > 0 else 1.0
    K = _gram(X, X, spec.family, gamma, spec.poly_degree, spec.coef0)
    coefs = []
    intercepts = np.zeros(k)
    hit_cap = False
    for c in range(k):
        ybin = np.where(yi == c, 1.0, -1.0)
        alpha, b, updates = smo_solve(K, ybin, spec.c, spec.smo_tol, spec.smo_max_passes)
        hit_cap = hit_cap or updates >= spec.smo_max_passes
        coefs.append(alpha * ybin)
        intercepts[c] = b
    if hit_cap:
        warnings.warn(f"SMO update cap {spec.smo_max_passes} reached; solution may be loose")
    return {
        "dual_coef": np.array(coefs),  # (k, n): alpha_i * y_i per machine
        "intercepts": intercepts,
        "X_train": X,
        "gamma": gamma,
        "kernel": spec.family,
        "degree": spec.poly_degree,
        "coef0": spec.coef0,
    }


def _scores_svm(params, X):
    if X.shape[1] != params["X_train"].shape[1]:
        raise ValueError("feature dimension mismatch")
    K = _gram(X, params["X_train"], params["kernel"], params["gamma"],
              params["degree"], params["coef0"])
    return K @ params["dual_coef"].T + params["intercepts"]


# ---------------------------------------------------------------------------
# random forest (CART, Gini)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, boundscheck=False)
def _build_tree(X, yi, k, idx, mtry, max_depth, seed,
                feature, thresh, left, right, leaf_dist):
    """Grow one CART tree over idx (sample indices); returns node count."""
    d = X.shape[1]
    m = idx.shape[0]
    # explicit stack of (node, start, end, depth) over a shared index buffer
    stack_node = np.empty(2 * m + 2, dtype=np.int64)
    stack_lo = np.empty(2 * m + 2, dtype=np.int64)
    stack_hi = np.empty(2 * m + 2, dtype=np.int64)
    stack_depth = np.empty(2 * m + 2, dtype=np.int64)
    feat_pool = np.empty(d, dtype=np.int64)
    vals = np.empty(m, dtype=np.float64)
    cnt = np.empty(k, dtype=np.float64)
    lcnt = np.empty(k, dtype=np.float64)
    rcnt = np.empty(k, dtype=np.float64)
    state = np.uint64(seed)
    n_nodes = 1
    sp = 0
    stack_node[sp] = 0
    stack_lo[sp] = 0
    stack_hi[sp] = m
    stack_depth[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        cnt[:] = 0.0
        for t in range(lo, hi):
            cnt[yi[idx[t]]] += 1.0
        mm = hi - lo
        nz = 0
        for c in range(k):
            if cnt[c] > 0:
                nz += 1
        if nz <= 1 or mm < 2 or (max_depth > 0 and depth >= max_depth):
            feature[node] = -1
            leaf_dist[node] = cnt / mm
            continue
        parent_gini = 1.0
        for c in range(k):
            parent_gini -= (cnt[c] / mm) ** 2
        # mtry random candidate features; keep drawing past mtry until a
        # usable split shows up (so consistent data always gets memorized)
        for f in range(d):
            feat_pool[f] = f
        best_gain = 0.0
        best_feat = -1
        best_thresh = 0.0
        for pick in range(d):
            if pick >= mtry and best_feat >= 0:
                break
            state += np.uint64(0x9E3779B97F4A7C15)
            z = state
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
            r = pick + int((np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)) * (d - pick))
            tmp = feat_pool[pick]
            feat_pool[pick] = feat_pool[r]
            feat_pool[r] = tmp
            f = feat_pool[pick]
            for t in range(lo, hi):
                vals[t - lo] = X[idx[t], f]
            order = np.argsort(vals[:mm], kind="mergesort")
            lcnt[:] = 0.0
            for c in range(k):
                rcnt[c] = cnt[c]
            for s in range(mm - 1):
                row = idx[lo + order[s]]
                cl = yi[row]
                lcnt[cl] += 1.0
                rcnt[cl] -= 1.0
                v_here = vals[order[s]]
                v_next = vals[order[s + 1]]
                if v_next <= v_here:
                    continue
                nl = s + 1.0
                nr = mm - nl
                gl = 1.0
                gr = 1.0
                for c in range(k):
                    gl -= (lcnt[c] / nl) ** 2
                    gr -= (rcnt[c] / nr) ** 2
                gain = parent_gini - (nl * gl + nr * gr) / mm
                if gain > best_gain + 1e-15:
                    best_gain = gain
                    best_feat = f
                    best_thresh = (v_here + v_next) / 2.0
        if best_feat < 0:
            feature[node] = -1
            leaf_dist[node] = cnt / mm
            continue
        # partition idx[lo:hi] by the chosen split (stable two-pointer)
        a = lo
        bptr = hi - 1
        while a <= bptr:
            if X[idx[a], best_feat] <= best_thresh:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[bptr]
                idx[bptr] = tmp
                bptr -= 1
        mid = a
        feature[node] = best_feat
        thresh[node] = best_thresh
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack_node[sp] = left[node]
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = right[node]
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes


@njit(cache=True, nogil=True, parallel=True, boundscheck=False)
def _build_forest(X, yi, k, n_trees, mtry, max_depth, bootstrap, seeds,
                  features, threshs, lefts, rights, leaf_dists):
    n = X.shape[0]
    for t in prange(n_trees):
        idx = np.empty(n, dtype=np.int64)
        if bootstrap:
            state = np.uint64(seeds[t])
            for s in range(n):
                state += np.uint64(0x9E3779B97F4A7C15)
                z = state
                z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                z = z ^ (z >> np.uint64(31))
                idx[s] = int((np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)) * n)
        else:
            for s in range(n):
                idx[s] = s
        _build_tree(X, yi, k, idx, mtry, max_depth, seeds[t] ^ np.uint64(0xF0F0),
                    features[t], threshs[t], lefts[t], rights[t], leaf_dists[t])


@njit(cache=True, nogil=True, parallel=True, boundscheck=False)
def _forest_scores(X, features, threshs, lefts, rights, leaf_dists, out):
    n_trees = features.shape[0]
    n = X.shape[0]
    for i in prange(n):
        for t in range(n_trees):
            node = 0
            while features[t, node] >= 0:
                if X[i, features[t, node]] <= threshs[t, node]:
                    node = lefts[t, node]
                else:
                    node = rights[t, node]
            out[i] += leaf_dists[t, node]
        out[i] /= n_trees


def _fit_forest(spec, X, yi, k):
    n, d = X.shape
    mtry = max(1, int(np.sqrt(d)))
    max_nodes = 2 * n + 1
    features = np.full((spec.n_trees, max_nodes), -1, dtype=np.int64)
    threshs = np.zeros((spec.n_trees, max_nodes))
    lefts = np.zeros((spec.n_trees, max_nodes), dtype=np.int64)
    rights = np.zeros((spec.n_trees, max_nodes), dtype=np.int64)
    leaf_dists = np.zeros((spec.n_trees, max_nodes, k))
    seeds = np.array([derive_seed(spec.seed, 0x7EE5, t) for t in range(spec.n_trees)],
                     dtype=np.uint64)
    _build_forest(X, yi, k, spec.n_trees, mtry, spec.max_depth, spec.bootstrap,
                  seeds, features, threshs, lefts, rights, leaf_dists)
    return {
        "features": features,
        "thresholds": threshs,
        "lefts": lefts,
        "rights": rights,
        "leaf_dists": leaf_dists,
        "d": d,
    }


def _scores_forest(params, X):
    if X.shape[1] != params["d"]:
        raise ValueError("feature dimension mismatch")
    out = np.zeros((X.shape[0], params["leaf_dists"].shape[2]))
    _forest_scores(X, params["features"], params["thresholds"], params["lefts"],
                   params["rights"], params["leaf_dists"], out)
    return out
