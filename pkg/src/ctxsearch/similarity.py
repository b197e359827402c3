"""Embedding normalization and cosine similarity over the gallery."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import EmbeddingVec


def l2_normalize(v: EmbeddingVec) -> EmbeddingVec:
    """Unit-length copy of ``v``; rejects the zero vector."""
    return v.unit()


def cosine_sim(a: EmbeddingVec, b: EmbeddingVec) -> float:
    """Dot product of two unit embeddings, clipped into [-1, 1]."""
    if not (a.normalized and b.normalized):
        raise ValueError("cosine_sim requires normalized embeddings")
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    s = float(np.dot(a.values, b.values))
    return max(-1.0, min(1.0, s))


def sim_matrix(rows: Sequence[EmbeddingVec], cols: Sequence[EmbeddingVec]) -> np.ndarray:
    """Pairwise cosine similarities, ``rows`` against ``cols``.

    All embeddings must be normalized and share one dimension.  Computed in
    double precision; entries are clipped into [-1, 1].
    """
    dims = set()
    for e in list(rows) + list(cols):
        if not e.normalized:
            raise ValueError("sim_matrix requires normalized embeddings")
        dims.add(e.dim)
    if len(dims) > 1:
        raise ValueError(f"mixed embedding dimensions: {sorted(dims)}")
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)))
    r = np.stack([e.values for e in rows])
    c = np.stack([e.values for e in cols])
    return np.clip(r @ c.T, -1.0, 1.0)
