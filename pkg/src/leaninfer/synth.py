"""Ground-truth multi-party retweet network generator.

A degree-corrected block model on an ideological axis: the expected retweet
rate from user u to user v is proportional to v's popularity weight times
exp(-decay * |ideology(u) - ideology(v)|), boosted for the designated hubs of
u's own party. Edge multiplicities are Poisson, so retweet counts above 1
exist and weighted sampling paths get exercised. Per-party hubs double as the
k-shot anchors; the most popular members of each party are the labeled ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._alias import alias_draw, build_alias
from ._rng import derive_seed
from .graph import InteractionGraph, LabelSet, ingest_labels


@dataclass(frozen=True)
class PartySpec:
    name: str
    wing: str  # "L" | "R"
    size: int
    ideology: float  # position in [-1, 1]
    hub_count: int = 3


@dataclass(frozen=True)
class SynthConfig:
    parties: tuple
    labeled_fraction: float | tuple = 0.05  # scalar or per-party
    base_rate: float = 30.0                 # expected retweets emitted per user
    decay: float = 2.0                      # ideological affinity decay
    popularity_exponent: float = 2.5        # Pareto tail of in-popularity
    hub_boost: float = 30.0                 # own-party hub attractiveness multiplier
    labeled_rate_boost: float = 1.0         # activity multiplier for labeled users
    seed: int = 0

    def __post_init__(self):
        if not self.parties:
            raise ValueError("need at least one party")
        for p in self.parties:
            if p.size < 1:
                raise ValueError(f"party {p.name!r} has size {p.size}")
            if p.wing not in ("L", "R"):
                raise ValueError(f"party {p.name!r} wing must be L or R")
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive (config yields zero expected edges)")
        if self.decay < 0:
            raise ValueError("decay must be >= 0")
        if self.popularity_exponent <= 2.0:
            raise ValueError("popularity_exponent must exceed 2 for finite mean popularity")

    def fractions(self) -> list[float]:
        if isinstance(self.labeled_fraction, (int, float)):
            return [float(self.labeled_fraction)] * len(self.parties)
        return [float(f) for f in self.labeled_fraction]


@njit(cache=True, nogil=True)
def _emit_events(counts, party_of, party_choice_prob, party_choice_alias,
                 member_prob, member_alias, member_prob_own, member_alias_own,
                 party_offsets, src_out, dst_out, seed):
    state = np.uint64(seed)
    k = party_offsets.shape[0] - 1
    pos = 0
    for u in range(counts.shape[0]):
        pu = party_of[u]
        for _ in range(counts[u]):
            state += np.uint64(0x9E3779B97F4A7C15)
            z = state
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
            u1 = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            q = alias_draw(party_choice_prob[pu], party_choice_alias[pu], u1)
            s, e = party_offsets[q], party_offsets[q + 1]
            v = -1
            for _retry in range(8):
                state += np.uint64(0x9E3779B97F4A7C15)
                z = state
                z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
                z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
                z = z ^ (z >> np.uint64(31))
                u2 = np.float64(z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
                if q == pu:
                    v = s + alias_draw(member_prob_own[s:e], member_alias_own[s:e], u2)
                else:
                    v = s + alias_draw(member_prob[s:e], member_alias[s:e], u2)
                if v != u:
                    break
                v = -1
            if v >= 0:
                src_out[pos] = u
                dst_out[pos] = v
                pos += 1
    return pos


def generate(cfg: SynthConfig):
    """Returns (InteractionGraph, LabelSet, anchors) where anchors maps party
    name -> hub user ids ordered by realized weighted in-degree."""
    parties = list(cfg.parties)
    k = len(parties)
    sizes = np.array([p.size for p in parties], dtype=np.int64)
    offsets = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    n = int(offsets[-1])
    if n < 2:
        raise ValueError("need at least 2 users")
    party_of = np.repeat(np.arange(k, dtype=np.int64), sizes)
    ids = [f"u{i:06d}" for i in range(n)]

    rng = np.random.Generator(np.random.PCG64(derive_seed(cfg.seed, 0x5B3)))
    # Pareto popularity, sorted so member 0 of each party is its most popular
    tail = cfg.popularity_exponent - 1.0
    pop = (1.0 - rng.random(n)) ** (-1.0 / tail)
    for p in range(k):
        s, e = offsets[p], offsets[p + 1]
        pop[s:e] = np.sort(pop[s:e])[::-1]

    boosted = pop.copy()
    for p, spec in enumerate(parties):
        s = offsets[p]
        hubs = min(spec.hub_count, spec.size)
        boosted[s : s + hubs] *= cfg.hub_boost

    # party-choice masses: plain popularity for other parties, boosted for own
    ideol = np.array([p.ideology for p in parties])
    plain_tot = np.array([pop[offsets[p] : offsets[p + 1]].sum() for p in range(k)])
    boost_tot = np.array([boosted[offsets[p] : offsets[p + 1]].sum() for p in range(k)])
    mass = np.empty((k, k))
    for pu in range(k):
        for q in range(k):
            tot = boost_tot[q] if q == pu else plain_tot[q]
            mass[pu, q] = tot * np.exp(-cfg.decay * abs(ideol[pu] - ideol[q]))

    pc_prob = np.empty((k, k))
    pc_alias = np.empty((k, k), dtype=np.int64)
    for pu in range(k):
        prob, alias = build_alias(mass[pu])
        pc_prob[pu] = prob
        pc_alias[pu] = alias
    m_prob = np.empty(n)
    m_alias = np.empty(n, dtype=np.int64)
    mo_prob = np.empty(n)
    mo_alias = np.empty(n, dtype=np.int64)
    for p in range(k):
        s, e = offsets[p], offsets[p + 1]
        m_prob[s:e], m_alias[s:e] = build_alias(pop[s:e])
        mo_prob[s:e], mo_alias[s:e] = build_alias(boosted[s:e])

    n_lab_by_party = []
    for spec, frac in zip(parties, cfg.fractions()):
        hubs = min(spec.hub_count, spec.size)
        n_lab = min(spec.size, max(hubs, int(round(frac * spec.size)))) if frac > 0 else hubs
        n_lab_by_party.append(n_lab)
    rate = np.full(n, cfg.base_rate)
    for p in range(k):
        s = offsets[p]
        rate[s : s + n_lab_by_party[p]] *= cfg.labeled_rate_boost
    counts = rng.poisson(rate).astype(np.int64)
    total = int(counts.sum())
    if total == 0:
        raise ValueError("config produced zero retweet events; raise base_rate")
    src = np.empty(total, dtype=np.int64)
    dst = np.empty(total, dtype=np.int64)
    emitted = _emit_events(counts, party_of, pc_prob, pc_alias, m_prob, m_alias,
                           mo_prob, mo_alias, offsets, src, dst,
                           np.uint64(derive_seed(cfg.seed, 0xE64)))
    src, dst = src[:emitted], dst[:emitted]
    graph = InteractionGraph(ids, src, dst, np.ones(emitted, dtype=np.int64))

    label_records = []
    for p, spec in enumerate(parties):
        s = offsets[p]
        for i in range(n_lab_by_party[p]):
            label_records.append((ids[s + i], spec.name, spec.wing))
    labels = ingest_labels(label_records, graph)

    in_w = np.zeros(n)
    np.add.at(in_w, dst, 1.0)
    anchors = {}
    for p, spec in enumerate(parties):
        s = offsets[p]
        hubs = min(spec.hub_count, spec.size)
        hub_idx = list(range(s, s + hubs))
        hub_idx.sort(key=lambda i: (-in_w[i], ids[i]))
        anchors[spec.name] = [ids[i] for i in hub_idx]
    return graph, labels, anchors


def save_anchors(anchors: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for party in sorted(anchors):
            for rank, uid in enumerate(anchors[party]):
                f.write(f"{party}\t{rank}\t{uid}\n")


def load_anchors(path) -> dict:
    anchors: dict[str, list] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            party, rank, uid = line.split("\t")
            rows.append((party, int(rank), uid))
    for party, _, uid in sorted(rows, key=lambda r: (r[0], r[1])):
        anchors.setdefault(party, []).append(uid)
    return anchors


_EUS7_IDEOLOGY = (-0.9, -0.6, -0.4, -0.2, 0.4, 0.6, 0.9)


def _seven_parties(size_per_party: int, hub_count: int = 3) -> tuple:
    names = ["P1", "P2", "P3", "P4", "P5", "P6", "P7"]
    return tuple(
        PartySpec(name, "L" if x < 0 else "R", size_per_party, x, hub_count)
        for name, x in zip(names, _EUS7_IDEOLOGY)
    )


def preset(name: str, seed: int = 0) -> SynthConfig:
    """Named benchmark configurations.

    ``eus7``: 7 parties, 100 labeled users each, ~20k background users.
    ``eus7-small``: same shape at 1/10 scale for fast runs.
    """
    if name == "eus7":
        parties = _seven_parties(2957)
        return SynthConfig(parties, labeled_fraction=100 / 2957, base_rate=40.0,
                           decay=2.0, hub_boost=100.0, labeled_rate_boost=10.0, seed=seed)
    if name == "eus7-small":
        parties = _seven_parties(296, hub_count=3)
        return SynthConfig(parties, labeled_fraction=10 / 296, base_rate=40.0,
                           decay=2.0, hub_boost=100.0, labeled_rate_boost=10.0, seed=seed)
    raise ValueError(f"unknown preset {name!r}; available: eus7, eus7-small")


PRESETS = ("eus7", "eus7-small")
