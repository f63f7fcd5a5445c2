"""Skip-gram negative-sampling trainer over node pair streams.

One trainer serves all three embedding methods: DeepWalk and node2vec feed it
center/context pairs from walk windows, the relational method feeds it raw
(retweeter, retweeted) interaction pairs sampled proportionally to retweet
counts. Storage is float32; updates follow the classic single-hidden-layer
formulation with a linearly decaying learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import get_num_threads, njit, prange, set_num_threads

from ._alias import alias_draw, build_alias
from ._rng import derive_seed
from .embedding import EmbeddingMatrix
from .graph import InteractionGraph
from .walks import WalkCorpus

SIGMOID_CUTOFF = 30.0  # |x| beyond which float32 sigmoid is exactly 0 or 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SgnsConfig:
    dims: int = 20
    negatives: int = 5
    initial_lr: float = 0.025
    min_lr: float = 1e-4
    epochs: int = 1
    window: int = 10
    noise_exponent: float = 0.75
    seed: int = 0
    workers: int = 1  # >1 switches to lock-free parallel SGD (nondeterministic)
    track_loss: bool = False  # accumulate per-half-epoch loss (costs ~2x)

    def __post_init__(self):
        if self.dims < 1 or self.negatives < 1 or self.epochs < 1 or self.window < 1:
            raise ValueError("dims, negatives, epochs and window must be positive")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")


@dataclass
class TrainPairStream:
    """Ordered (center, context) pair stream over node indices.

    Walk-window streams keep the corpus and enumerate pairs lazily; interaction
    streams hold materialized sample arrays. Both are re-iterable.
    """

    source: str  # "walk_window" | "interaction"
    n_nodes: int
    total_pairs: int
    corpus: WalkCorpus | None = None
    window: int = 0
    centers: np.ndarray | None = None
    contexts: np.ndarray | None = None

    def pairs(self):
        """Python-level pair iterator (tests and small corpora only)."""
        if self.source == "walk_window":
            for w in self.corpus.walks():
                L = len(w)
                for i in range(L):
                    lo = max(0, i - self.window)
                    hi = min(L - 1, i + self.window)
                    for j in range(lo, hi + 1):
                        if j != i:
                            yield int(w[i]), int(w[j])
        else:
            for c, x in zip(self.centers, self.contexts):
                yield int(c), int(x)

    def context_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_nodes, dtype=np.float64)
        if self.source == "walk_window":
            _count_walk_contexts(self.corpus.flat, self.corpus.offsets, self.window, counts)
        else:
            np.add.at(counts, self.contexts, 1.0)
        return counts


def pairs_from_walks(corpus: WalkCorpus, window: int) -> TrainPairStream:
    """Fixed-window skip-gram pairs: (walk[i], walk[j]) for 0 < |i-j| <= window."""
    if window < 1:
        raise ValueError("window must be >= 1")
    total = int(_count_walk_pairs(corpus.offsets, window))
    return TrainPairStream(
        source="walk_window", n_nodes=corpus.n_nodes, total_pairs=total,
        corpus=corpus, window=window,
    )


def pairs_from_interactions(
    graph: InteractionGraph,
    samples: int | None = None,
    seed: int = 0,
    symmetric: bool = False,
    include_self_loops: bool = False,
) -> TrainPairStream:
    """Sample (retweeter, retweeted) pairs i.i.d. proportionally to edge weight.

    Default sample count equals the total retweet count, i.e. one epoch over
    all interaction events in expectation. ``symmetric`` additionally emits the
    reversed pair for every draw.
    """
    src, dst, wgt = graph.edge_arrays()
    if not include_self_loops:
        keep = src != dst
        src, dst, wgt = src[keep], dst[keep], wgt[keep]
    if len(src) == 0 or wgt.sum() <= 0:
        raise ValueError("graph has no usable interaction pairs")
    if samples is None:
        samples = int(wgt.sum())
    if samples < 1:
        raise ValueError("samples must be >= 1")
    prob, alias = build_alias(wgt.astype(np.float64))
    picks = np.empty(samples, dtype=np.int64)
    _sample_edges(prob, alias, np.uint64(derive_seed(seed, 0x5A3)), picks)
    centers = src[picks].astype(np.int32)
    contexts = dst[picks].astype(np.int32)
    if symmetric:
        centers, contexts = (
            np.concatenate([centers, contexts]),
            np.concatenate([contexts, centers]),
        )
    return TrainPairStream(
        source="interaction", n_nodes=graph.n, total_pairs=len(centers),
        centers=centers, contexts=contexts,
    )


@njit(cache=True, nogil=True)
def _sample_edges(prob, alias, state, out):
    for i in range(out.shape[0]):
        state += np.uint64(0x9E3779B97F4A7C15)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        u = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
        out[i] = alias_draw(prob, alias, u)


@njit(cache=True, nogil=True)
def _count_walk_pairs(offsets, window):
    total = 0
    for w in range(offsets.shape[0] - 1):
        L = offsets[w + 1] - offsets[w]
        for i in range(L):
            lo = i - window if i - window > 0 else 0
            hi = i + window if i + window < L - 1 else L - 1
            total += hi - lo
    return total


@njit(cache=True, nogil=True)
def _count_walk_contexts(flat, offsets, window, counts):
    for w in range(offsets.shape[0] - 1):
        s, e = offsets[w], offsets[w + 1]
        L = e - s
        for i in range(L):
            lo = i - window if i - window > 0 else 0
            hi = i + window if i + window < L - 1 else L - 1
            for j in range(lo, hi + 1):
                if j != i:
                    counts[flat[s + j]] += 1.0


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def pair_loss(u: np.ndarray, v_pos: np.ndarray, v_negs: np.ndarray) -> float:
    """Negative log-likelihood of one (center, context, negatives) triple."""
    loss = -np.log(sigmoid(u @ v_pos))
    for v in v_negs:
        loss -= np.log(sigmoid(-(u @ v)))
    return float(loss)


def pair_grad(u, v_pos, v_negs):
    """Analytic gradient of :func:`pair_loss` w.r.t. (u, v_pos, v_negs)."""
    g_pos = sigmoid(u @ v_pos) - 1.0
    gu = g_pos * v_pos
    gv_pos = g_pos * u
    gv_negs = np.empty_like(v_negs)
    for k, v in enumerate(v_negs):
        g = sigmoid(u @ v)
        gu = gu + g * v
        gv_negs[k] = g * u
    return gu, gv_pos, gv_negs


# ---------------------------------------------------------------------------
# training kernels
#
# The sequential kernels are the deterministic reference path used by all
# evaluation protocols; the prange variants implement lock-free parallel SGD
# over pair shards and make no reproducibility promise.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, fastmath=False, boundscheck=False, inline="always")
def _sigmoid32(dot):
    if dot > SIGMOID_CUTOFF:
        return np.float32(1.0)
    if dot < -SIGMOID_CUTOFF:
        return np.float32(0.0)
    return np.float32(1.0) / (np.float32(1.0) + np.exp(-dot))


@njit(cache=True, nogil=True, fastmath=False, boundscheck=False, inline="always")
def _update_pair(U, V, c, x, lr, neg, nprob, nalias, state, grad, want_loss):
    """SGD step for one pair; returns (state, loss). Mirrors pair_grad in float32."""
    dims = U.shape[1]
    dot = np.float32(0.0)
    for d in range(dims):
        dot += U[c, d] * V[x, d]
    sg = _sigmoid32(dot)
    loss = 0.0
    if want_loss:
        loss -= np.log(sg if sg > 1e-12 else 1e-12)
    g = (sg - np.float32(1.0)) * lr
    for d in range(dims):
        grad[d] = g * V[x, d]
        V[x, d] -= g * U[c, d]
    n = nprob.shape[0]
    for _ in range(neg):
        state += np.uint64(0x9E3779B97F4A7C15)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        u01 = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
        t = alias_draw(nprob, nalias, u01)
        if t == x or t == c:
            # a node never serves as its own negative; hubs otherwise drag
            # their input vector along their high-frequency context vector
            continue
        dot = np.float32(0.0)
        for d in range(dims):
            dot += U[c, d] * V[t, d]
        sg = _sigmoid32(dot)
        if want_loss:
            om = 1.0 - sg
            loss -= np.log(om if om > 1e-12 else 1e-12)
        g = sg * lr
        for d in range(dims):
            grad[d] += g * V[t, d]
            V[t, d] -= g * U[c, d]
    for d in range(dims):
        U[c, d] -= grad[d]
    return state, loss


@njit(cache=True, nogil=True, fastmath=False, boundscheck=False)
def _train_walks_seq(flat, offsets, window, U, V, nprob, nalias, neg,
                     lr0, lr_min, epochs, seed, loss_halves, want_loss):
    dims = U.shape[1]
    grad = np.empty(dims, dtype=np.float32)
    total = np.float64(_count_walk_pairs(offsets, window)) * epochs
    lr64 = lr0
    step = lr0 / total
    state = np.uint64(seed)
    processed = 0
    half = total / 2.0
    for _ in range(epochs):
        for w in range(offsets.shape[0] - 1):
            s, e = offsets[w], offsets[w + 1]
            L = e - s
            for i in range(L):
                c = flat[s + i]
                lo = i - window if i - window > 0 else 0
                hi = i + window if i + window < L - 1 else L - 1
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    x = flat[s + j]
                    lr = np.float32(lr64) if lr64 > lr_min else np.float32(lr_min)
                    lr64 -= step
                    state, loss = _update_pair(U, V, c, x, lr, neg, nprob, nalias,
                                               state, grad, want_loss)
                    if want_loss:
                        loss_halves[0 if processed < half else 1] += loss
                    processed += 1
    return processed


@njit(cache=True, nogil=True, fastmath=False, boundscheck=False)
def _train_array_seq(centers, contexts, U, V, nprob, nalias, neg,
                     lr0, lr_min, epochs, seed, loss_halves, want_loss):
    dims = U.shape[1]
    grad = np.empty(dims, dtype=np.float32)
    m = centers.shape[0]
    total = np.float64(m) * epochs
    lr64 = lr0
    step = lr0 / total
    state = np.uint64(seed)
    processed = 0
    half = total / 2.0
    for _ in range(epochs):
        for i in range(m):
            lr = np.float32(lr64) if lr64 > lr_min else np.float32(lr_min)
            lr64 -= step
            state, loss = _update_pair(U, V, centers[i], contexts[i], lr, neg,
                                       nprob, nalias, state, grad, want_loss)
            if want_loss:
                loss_halves[0 if processed < half else 1] += loss
            processed += 1
    return processed


@njit(cache=True, nogil=True, fastmath=False, boundscheck=False, parallel=True)
def _train_walks_hogwild(flat, offsets, window, U, V, nprob, nalias, neg,
                         lr0, lr_min, epochs, seed):
    dims = U.shape[1]
    n_walks = offsets.shape[0] - 1
    total = np.float64(_count_walk_pairs(offsets, window)) * epochs
    for ep in range(epochs):
        for w in prange(n_walks):
            grad = np.empty(dims, dtype=np.float32)
            state = np.uint64(seed) ^ np.uint64(w * 2654435761 + ep + 1)
            s, e = offsets[w], offsets[w + 1]
            L = e - s
            # linear decay approximated by walk position; shards race on U/V
            frac = (ep * n_walks + w) / (epochs * n_walks)
            lr_w = lr0 * (1.0 - frac)
            lr = np.float32(lr_w) if lr_w > lr_min else np.float32(lr_min)
            for i in range(L):
                c = flat[s + i]
                lo = i - window if i - window > 0 else 0
                hi = i + window if i + window < L - 1 else L - 1
                for j in range(lo, hi + 1):
                    if j == i:
                        continue
                    state, _ = _update_pair(U, V, c, flat[s + j], lr, neg, nprob,
                                            nalias, state, grad, False)
    return total


def train(
    pairs: TrainPairStream,
    cfg: SgnsConfig | None = None,
    ids: list[str] | None = None,
) -> EmbeddingMatrix:
    """Train embeddings from a pair stream; returns the input ("user") vectors.

    Deterministic and bit-reproducible for ``workers=1``. Negative samples are
    drawn from the stream's context-occurrence distribution raised to
    ``noise_exponent``. The companion context matrix is discarded.
    """
    cfg = cfg or SgnsConfig()
    n = pairs.n_nodes
    if n < 2:
        raise ValueError("need at least 2 nodes to train")
    counts = pairs.context_counts()
    noise = counts**cfg.noise_exponent
    if noise.sum() <= 0:
        raise ValueError("pair stream is empty")
    nprob, nalias = build_alias(noise)

    rng = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, 0x1A17)))
    U = ((rng.random((n, cfg.dims)) - 0.5) / cfg.dims).astype(np.float32)
    V = np.zeros((n, cfg.dims), dtype=np.float32)
    loss_halves = np.zeros(2, dtype=np.float64)
    kernel_seed = np.uint64(derive_seed(cfg.seed, 0x5616))

    if cfg.workers > 1 and pairs.source == "walk_window":
        old = get_num_threads()
        set_num_threads(cfg.workers)
        try:
            _train_walks_hogwild(pairs.corpus.flat, pairs.corpus.offsets, pairs.window,
                                 U, V, nprob, nalias, cfg.negatives, cfg.initial_lr,
                                 cfg.min_lr, cfg.epochs, kernel_seed)
        finally:
            set_num_threads(old)
    elif pairs.source == "walk_window":
        # the stream's window (set when the pairs were built) is authoritative
        _train_walks_seq(pairs.corpus.flat, pairs.corpus.offsets, pairs.window, U, V,
                         nprob, nalias, cfg.negatives, cfg.initial_lr, cfg.min_lr,
                         cfg.epochs, kernel_seed, loss_halves, cfg.track_loss)
    else:
        _train_array_seq(pairs.centers, pairs.contexts, U, V, nprob, nalias,
                         cfg.negatives, cfg.initial_lr, cfg.min_lr, cfg.epochs,
                         kernel_seed, loss_halves, cfg.track_loss)

    finite = np.isfinite(U).all() and np.isfinite(V).all() and np.isfinite(loss_halves).all()
    # saturated-but-finite blowups indicate the same failure: the sigmoid is
    # exactly 0/1 in float32 well before float32 overflow
    if not finite or max(np.abs(U).max(), np.abs(V).max()) > 1e8:
        raise TrainingDiverged(
            f"training diverged (initial_lr={cfg.initial_lr}); lower the learning rate"
        )
    if ids is None:
        ids = [str(i) for i in range(n)]
    meta = {
        "source": pairs.source,
        "dims": cfg.dims,
        "pairs": pairs.total_pairs * cfg.epochs,
    }
    if cfg.track_loss:
        meta["loss_first_half"] = float(loss_halves[0])
        meta["loss_second_half"] = float(loss_halves[1])
    return EmbeddingMatrix(ids, U.astype(np.float64), meta)
