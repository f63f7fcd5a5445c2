"""Dense per-user feature matrices and their on-disk formats.

Text format: header line ``N dims``, then one ``external_id v1 ... v_dims``
line per user. The binary cache is the same versioned container style as the
graph cache.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"LEANEM01"


@dataclass
class EmbeddingMatrix:
    """Per-user vectors, one row per internal node index."""

    ids: list[str]
    vectors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError("vectors must be (n_users, dims) matching ids")
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding contains non-finite entries")

    @property
    def dims(self) -> int:
        return self.vectors.shape[1]

    def rows_for(self, ids: list[str]) -> np.ndarray:
        index = {u: i for i, u in enumerate(self.ids)}
        return self.vectors[np.array([index[u] for u in ids], dtype=np.int64)]

    def save_text(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{len(self.ids)} {self.dims}\n")
            for uid, row in zip(self.ids, self.vectors):
                f.write(uid + " " + " ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_text(cls, path) -> "EmbeddingMatrix":
        with open(path, "r", encoding="utf-8") as f:
            n, dims = (int(x) for x in f.readline().split())
            ids: list[str] = []
            vecs = np.empty((n, dims), dtype=np.float64)
            for i in range(n):
                parts = f.readline().split()
                ids.append(parts[0])
                vecs[i] = [float(x) for x in parts[1:]]
        return cls(ids, vecs)

    def save(self, path) -> None:
        header = {"n": len(self.ids), "dims": self.dims, "ids": self.ids, "meta": self.meta}
        hbytes = json.dumps(header, separators=(",", ":")).encode()
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(np.uint64(len(hbytes)).tobytes())
            f.write(hbytes)
            f.write(np.ascontiguousarray(self.vectors, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        with open(path, "rb") as f:
            if f.read(len(MAGIC)) != MAGIC:
                raise ValueError(f"not an embedding cache: {path}")
            (hlen,) = np.frombuffer(f.read(8), dtype=np.uint64)
            header = json.loads(f.read(int(hlen)))
            vecs = np.frombuffer(f.read(), dtype=np.float64).reshape(header["n"], header["dims"])
        return cls(header["ids"], vecs.copy(), header.get("meta", {}))
