"""Random-walk corpus generation: uniform (first-order) and p/q-biased
(second-order) walks over the interaction graph.

Walks run on the symmetrized weighted graph by default; retweet direction
starves walks at users who are retweeted but never retweet. Every node gets
``walks_per_node`` walks; a walk stuck at a node with no outgoing neighbors
truncates early (an isolated node yields length-1 walks).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit, prange

from ._alias import alias_draw, build_alias
from ._rng import derive_seed
from .graph import Adjacency, InteractionGraph, _build_csr


@dataclass(frozen=True)
class WalkConfig:
    walks_per_node: int = 10
    walk_length: int = 80
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    directed_as: str = "symmetrized"  # or "directed"

    def __post_init__(self):
        if self.walks_per_node < 1 or self.walk_length < 1:
            raise ValueError("walks_per_node and walk_length must be positive")
        if self.p <= 0 or self.q <= 0:
            raise ValueError("p and q must be positive")
        if self.directed_as not in ("symmetrized", "directed"):
            raise ValueError(f"unknown directedness {self.directed_as!r}")

    def fingerprint(self) -> str:
        return (
            f"wpn={self.walks_per_node},len={self.walk_length},p={self.p},"
            f"q={self.q},seed={self.seed},{self.directed_as}"
        )


class WalkCorpus:
    """Flattened walk sequences: walk i is flat[offsets[i]:offsets[i+1]]."""

    def __init__(self, flat: np.ndarray, offsets: np.ndarray, n_nodes: int, fingerprint: str):
        self.flat = flat
        self.offsets = offsets
        self.n_nodes = n_nodes
        self.fingerprint = fingerprint

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i] : self.offsets[i + 1]]

    def walks(self):
        for i in range(len(self)):
            yield self[i]

    def save_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for w in self.walks():
                f.write(" ".join(str(int(x)) for x in w) + "\n")


def _walk_adjacency(graph: InteractionGraph, cfg: WalkConfig) -> Adjacency:
    if cfg.directed_as == "symmetrized":
        return graph.symmetrized()
    # directed: drop self-loops, keep out-edges as-is
    src, dst, wgt = graph.edge_arrays()
    keep = src != dst
    return _build_csr(graph.n, src[keep], dst[keep], wgt[keep])


@njit(cache=True, nogil=True, parallel=True)
def _uniform_walk_kernel(indptr, indices, aprob, aidx, wpn, length, seed, out, lengths):
    n = indptr.shape[0] - 1
    for slot in prange(n * wpn):
        node = slot // wpn
        rep = slot - node * wpn
        state = np.uint64(seed)
        state = _mix(state ^ np.uint64(node + 1))
        state = _mix(state ^ np.uint64(rep + 1))
        cur = node
        out[slot, 0] = cur
        steps = 1
        for _ in range(length - 1):
            s = indptr[cur]
            deg = indptr[cur + 1] - s
            if deg == 0:
                break
            state, u = _next_u(state)
            cur = indices[s + alias_draw(aprob[s : s + deg], aidx[s : s + deg], u)]
            out[slot, steps] = cur
            steps += 1
        lengths[slot] = steps


@njit(cache=True, nogil=True, inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _next_u(state):
    state += np.uint64(0x9E3779B97F4A7C15)
    z = _mix(state)
    return state, np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True, inline="always")
def _has_edge(indptr, indices, a, b):
    lo = indptr[a]
    hi = indptr[a + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        v = indices[mid]
        if v == b:
            return True
        if v < b:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True, nogil=True, parallel=True)
def _biased_walk_kernel(indptr, indices, weights, aprob, aidx, wpn, length, p, q, seed, out, lengths, max_deg):
    n = indptr.shape[0] - 1
    inv_p = 1.0 / p
    inv_q = 1.0 / q
    max_bias = max(inv_p, max(1.0, inv_q))
    for slot in prange(n * wpn):
        node = slot // wpn
        rep = slot - node * wpn
        buf = np.empty(max_deg, dtype=np.float64)
        state = np.uint64(seed)
        state = _mix(state ^ np.uint64(node + 1))
        state = _mix(state ^ np.uint64(rep + 1))
        cur = node
        out[slot, 0] = cur
        steps = 1
        prev = -1
        for _ in range(length - 1):
            s = indptr[cur]
            deg = indptr[cur + 1] - s
            if deg == 0:
                break
            state, u = _next_u(state)
            if prev < 0:
                nxt = indices[s + alias_draw(aprob[s : s + deg], aidx[s : s + deg], u)]
            else:
                # rejection sampling: candidate x ~ w(cur, x) via the alias
                # table, accepted with probability bias(x)/max_bias. Yields the
                # exact second-order law at O(1) expected cost per step.
                nxt = -1
                for _try in range(256):
                    cand = indices[s + alias_draw(aprob[s : s + deg], aidx[s : s + deg], u)]
                    if cand == prev:
                        bias = inv_p
                    elif _has_edge(indptr, indices, prev, cand):
                        bias = 1.0
                    else:
                        bias = inv_q
                    state, u2 = _next_u(state)
                    if u2 * max_bias <= bias:
                        nxt = cand
                        break
                    state, u = _next_u(state)
                if nxt < 0:
                    # pathological acceptance rate: exact fallback scan
                    total = 0.0
                    for kk in range(deg):
                        x = indices[s + kk]
                        w = weights[s + kk]
                        if x == prev:
                            w *= inv_p
                        elif _has_edge(indptr, indices, prev, x):
                            pass
                        else:
                            w *= inv_q
                        total += w
                        buf[kk] = total
                    state, u3 = _next_u(state)
                    target = u3 * total
                    lo = 0
                    hi = deg - 1
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if buf[mid] <= target:
                            lo = mid + 1
                        else:
                            hi = mid
                    nxt = indices[s + lo]
            prev = cur
            cur = nxt
            out[slot, steps] = cur
            steps += 1
        lengths[slot] = steps


def _alias_tables(adj: Adjacency) -> tuple[np.ndarray, np.ndarray]:
    aprob = np.zeros(len(adj.indices), dtype=np.float64)
    aidx = np.zeros(len(adj.indices), dtype=np.int64)
    _fill_alias(adj.indptr, adj.weights, aprob, aidx)
    return aprob, aidx


@njit(cache=True, nogil=True)
def _fill_alias(indptr, weights, aprob, aidx):
    n = indptr.shape[0] - 1
    for v in range(n):
        s, e = indptr[v], indptr[v + 1]
        if e > s:
            prob, alias = build_alias(weights[s:e])
            aprob[s:e] = prob
            aidx[s:e] = alias


def _run_walks(graph: InteractionGraph, cfg: WalkConfig, biased: bool) -> WalkCorpus:
    if graph.n == 0:
        raise ValueError("graph is empty")
    adj = _walk_adjacency(graph, cfg)
    aprob, aidx = _alias_tables(adj)
    n_walks = graph.n * cfg.walks_per_node
    out = np.zeros((n_walks, cfg.walk_length), dtype=np.int32)
    lengths = np.zeros(n_walks, dtype=np.int64)
    seed = derive_seed(cfg.seed, 0xA11CE)
    if biased:
        max_deg = max(int(adj.degrees().max()), 1)
        _biased_walk_kernel(
            adj.indptr, adj.indices, adj.weights, aprob, aidx,
            cfg.walks_per_node, cfg.walk_length, cfg.p, cfg.q,
            np.uint64(seed), out, lengths, max_deg,
        )
    else:
        _uniform_walk_kernel(
            adj.indptr, adj.indices, aprob, aidx,
            cfg.walks_per_node, cfg.walk_length, np.uint64(seed), out, lengths,
        )
    offsets = np.zeros(n_walks + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    flat = np.empty(offsets[-1], dtype=np.int32)
    _compact(out, lengths, offsets, flat)
    return WalkCorpus(flat, offsets, graph.n, cfg.fingerprint())


@njit(cache=True, nogil=True, parallel=True)
def _compact(out, lengths, offsets, flat):
    for i in prange(out.shape[0]):
        o = offsets[i]
        for j in range(lengths[i]):
            flat[o + j] = out[i, j]


def uniform_walks(graph: InteractionGraph, cfg: WalkConfig | None = None) -> WalkCorpus:
    """First-order walks: next node drawn proportionally to edge weight."""
    cfg = cfg or WalkConfig()
    if cfg.p != 1.0 or cfg.q != 1.0:
        cfg = replace(cfg, p=1.0, q=1.0)
    return _run_walks(graph, cfg, biased=False)


def biased_walks(graph: InteractionGraph, cfg: WalkConfig) -> WalkCorpus:
    """Second-order walks: from edge (t -> v), the unnormalized weight toward
    neighbor x is w(v,x)/p if x == t, w(v,x) if x is adjacent to t, else
    w(v,x)/q. The first step of each walk is first-order weighted."""
    return _run_walks(graph, cfg, biased=True)
