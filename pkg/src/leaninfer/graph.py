"""Weighted directed interaction graph and user label handling.

The graph is the sole input signal for every representation method: nodes are
users, an edge u -> v with weight w means u reshared v's content w times.
External string ids are mapped to dense internal indices (first-appearance
order) and adjacency is stored CSR-style for both directions.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAGIC = b"LEANGR01"

LEFT = "L"
RIGHT = "R"
WINGS = (LEFT, RIGHT)


class GraphError(Exception):
    """Base class for ingestion and validation failures."""


class ParseError(GraphError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(GraphError):
    pass


class ValidationError(GraphError):
    pass


@dataclass(frozen=True)
class Adjacency:
    """CSR neighbor lists: node i's neighbors are indices[indptr[i]:indptr[i+1]]."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[i], self.indptr[i + 1]
        return self.indices[s:e], self.weights[s:e]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)


class InteractionGraph:
    """Immutable aggregated retweet graph.

    Attributes
    ----------
    ids : list of external user ids, position = internal index
    out : Adjacency over outgoing edges (who this user retweeted)
    inc : Adjacency over incoming edges (who retweeted this user)
    total_weight : sum of all edge weights (= number of retweet events)
    self_loop_weight : portion of total_weight on self-retweets
    """

    def __init__(self, ids: list[str], src: np.ndarray, dst: np.ndarray, wgt: np.ndarray):
        self.ids = ids
        self.index_of = {u: i for i, u in enumerate(ids)}
        self.n = len(ids)
        self.out = _build_csr(self.n, src, dst, wgt)
        self.inc = _build_csr(self.n, dst, src, wgt)
        self.total_weight = int(wgt.sum())
        self.self_loop_weight = int(wgt[src == dst].sum())
        self._sym: Adjacency | None = None

    def __repr__(self) -> str:
        return f"InteractionGraph(n={self.n}, edges={len(self.out.indices)}, total_weight={self.total_weight})"

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, weight) arrays of the aggregated edge list, src-major order."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out.degrees())
        return src, self.out.indices.copy(), self.out.weights.copy()

    def symmetrized(self) -> Adjacency:
        """Undirected view with w(u,v) + w(v,u) merged; self-loops dropped.

        Cached after first call; the graph is immutable so this is safe to
        share across threads.
        """
        if self._sym is None:
            src, dst, wgt = self.edge_arrays()
            keep = src != dst
            src, dst, wgt = src[keep], dst[keep], wgt[keep]
            both_src = np.concatenate([src, dst])
            both_dst = np.concatenate([dst, src])
            both_w = np.concatenate([wgt, wgt])
            self._sym = _build_csr(self.n, both_src, both_dst, both_w)
        return self._sym

    def save(self, path) -> None:
        """Write the versioned binary cache (magic header + JSON + raw arrays)."""
        src, dst, wgt = self.edge_arrays()
        header = {
            "n": self.n,
            "edges": int(len(dst)),
            "total_weight": self.total_weight,
            "ids": self.ids,
        }
        hbytes = json.dumps(header, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(np.uint64(len(hbytes)).tobytes())
            f.write(hbytes)
            for arr in (src.astype(np.int64), dst.astype(np.int64), wgt.astype(np.int64)):
                f.write(arr.tobytes())

    @classmethod
    def load(cls, path) -> "InteractionGraph":
        with open(path, "rb") as f:
            magic = f.read(len(MAGIC))
            if magic != MAGIC:
                raise ParseError(f"not a graph cache (bad magic {magic!r})")
            (hlen,) = np.frombuffer(f.read(8), dtype=np.uint64)
            header = json.loads(f.read(int(hlen)))
            m = header["edges"]
            src = np.frombuffer(f.read(8 * m), dtype=np.int64)
            dst = np.frombuffer(f.read(8 * m), dtype=np.int64)
            wgt = np.frombuffer(f.read(8 * m), dtype=np.int64)
        return cls(header["ids"], src, dst, wgt)


def _build_csr(n: int, src: np.ndarray, dst: np.ndarray, wgt: np.ndarray) -> Adjacency:
    """Aggregate (src, dst, w) triples into CSR with sorted, de-duplicated rows."""
    order = np.lexsort((dst, src))
    src, dst, wgt = src[order], dst[order], wgt[order]
    if len(src):
        new = np.empty(len(src), dtype=bool)
        new[0] = True
        new[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        group = np.cumsum(new) - 1
        agg_w = np.zeros(group[-1] + 1, dtype=np.float64)
        np.add.at(agg_w, group, wgt)
        src, dst = src[new], dst[new]
    else:
        agg_w = np.zeros(0, dtype=np.float64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return Adjacency(indptr, dst.astype(np.int32), agg_w)


def ingest_edges(records: Iterable[tuple]) -> InteractionGraph:
    """Aggregate raw (src_id, dst_id[, count]) records into an InteractionGraph.

    Duplicate pairs are summed; node indices follow first appearance. Raises
    EmptyInputError on an empty stream and ParseError on malformed records.
    """
    index: dict[str, int] = {}
    ids: list[str] = []
    srcs: list[int] = []
    dsts: list[int] = []
    wgts: list[int] = []

    def intern(uid: str) -> int:
        i = index.get(uid)
        if i is None:
            i = len(ids)
            index[uid] = i
            ids.append(uid)
        return i

    for lineno, rec in enumerate(records, start=1):
        if len(rec) == 2:
            s, d = rec
            c = 1
        elif len(rec) == 3:
            s, d, c = rec
        else:
            raise ParseError(f"expected 2 or 3 fields, got {len(rec)}", lineno)
        try:
            c = int(c)
        except (TypeError, ValueError):
            raise ParseError(f"count {c!r} is not an integer", lineno) from None
        if c < 1:
            raise ParseError(f"count must be >= 1, got {c}", lineno)
        s, d = str(s), str(d)
        if not s or not d:
            raise ParseError("empty user id", lineno)
        srcs.append(intern(s))
        dsts.append(intern(d))
        wgts.append(c)

    if not srcs:
        raise EmptyInputError("no edge records in input")
    return InteractionGraph(
        ids,
        np.asarray(srcs, dtype=np.int64),
        np.asarray(dsts, dtype=np.int64),
        np.asarray(wgts, dtype=np.int64),
    )


def read_edge_file(path) -> InteractionGraph:
    """Parse a tab- or comma-separated edge file: ``src,dst[,count]`` per line.

    Blank lines and ``#`` comments are ignored.
    """
    with open(path, "r", encoding="utf-8") as f:
        return ingest_edges(_edge_records(f))


def _edge_records(f: io.TextIOBase):
    for raw in f:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        sep = "\t" if "\t" in line else ","
        yield tuple(part.strip() for part in line.split(sep))


def write_edge_file(graph: InteractionGraph, path) -> None:
    src, dst, wgt = graph.edge_arrays()
    with open(path, "w", encoding="utf-8") as f:
        for s, d, w in zip(src, dst, wgt):
            f.write(f"{graph.ids[s]}\t{graph.ids[d]}\t{int(w)}\n")


@dataclass
class LabelSet:
    """Party labels for a subset of graph users plus the party->wing coarsening map.

    ``party_of`` maps external user id -> party name; ``wing_of`` maps party
    name -> "L"/"R". ``dropped`` lists labeled ids absent from the graph.
    """

    party_of: dict[str, str]
    wing_of: dict[str, str]
    parties: list[str]
    dropped: list[str] = field(default_factory=list)

    @property
    def users(self) -> list[str]:
        return list(self.party_of)

    def counts(self) -> dict[str, int]:
        c = {p: 0 for p in self.parties}
        for party in self.party_of.values():
            c[party] += 1
        return c

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for uid, party in self.party_of.items():
                f.write(f"{uid},{party},{self.wing_of[party]}\n")


def ingest_labels(records: Iterable[tuple], graph: InteractionGraph) -> LabelSet:
    """Validate (user_id, party_name, wing) records against a graph.

    Users missing from the graph are dropped (and reported on the result);
    conflicting party wings or duplicate users with different parties raise
    ValidationError.
    """
    party_of: dict[str, str] = {}
    wing_of: dict[str, str] = {}
    parties: list[str] = []
    dropped: list[str] = []
    for lineno, rec in enumerate(records, start=1):
        if len(rec) != 3:
            raise ParseError(f"expected 3 fields, got {len(rec)}", lineno)
        uid, party, wing = (str(x).strip() for x in rec)
        if wing not in WINGS:
            raise ParseError(f"wing must be one of {WINGS}, got {wing!r}", lineno)
        if party in wing_of:
            if wing_of[party] != wing:
                raise ValidationError(
                    f"conflicting wing for party {party!r}: {wing_of[party]!r} vs {wing!r} (line {lineno})"
                )
        else:
            wing_of[party] = wing
            parties.append(party)
        if uid in party_of:
            if party_of[uid] != party:
                raise ValidationError(
                    f"duplicate user {uid!r} with different party: {party_of[uid]!r} vs {party!r} (line {lineno})"
                )
            continue
        if uid not in graph.index_of:
            dropped.append(uid)
            continue
        party_of[uid] = party
    if not party_of:
        raise EmptyInputError("no labeled users found in graph")
    return LabelSet(party_of, wing_of, parties, dropped)


def read_label_file(path, graph: InteractionGraph) -> LabelSet:
    """Parse a ``user_id,party_name,wing`` file (tab or comma separated)."""
    with open(path, "r", encoding="utf-8") as f:
        return ingest_labels(_edge_records(f), graph)


def coarsen_labels(labels: LabelSet) -> dict[str, str]:
    """Collapse party labels into the binary left/right framework."""
    return {uid: labels.wing_of[party] for uid, party in labels.party_of.items()}
