"""Embedding providers for the dense rerank stage.

The default is an offline feature-hash embedder so the whole pipeline runs
hermetically; a remote client covers deployments with a real embedding
service.
"""

from __future__ import annotations

import hashlib
from typing import Protocol

import numpy as np

from ..errors import RetrieverError
from .index import tokenize


class EmbeddingProvider(Protocol):
    """Deterministic text -> fixed-dimension vector."""

    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Signed feature hashing over tokens, L2-normalized.

    Stable across processes (keyed on a cryptographic digest of each token,
    not the interpreter's randomized ``hash``).
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise RetrieverError(f"embedding dimension must be >= 2, got {dim}")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokenize(text):
            h = int.from_bytes(
                hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "big")
            bucket = h % self.dim
            sign = 1.0 if (h >> 63) & 1 == 0 else -1.0
            vec[bucket] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec


class RemoteEmbedder:
    """Client for an HTTP embedding service returning one vector per text."""

    def __init__(self, endpoint: str, dim: int, timeout: float = 30.0):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        import requests

        resp = requests.post(self.endpoint, json={"texts": [text]},
                             timeout=self.timeout)
        resp.raise_for_status()
        vectors = resp.json().get("vectors")
        if not vectors or len(vectors[0]) != self.dim:
            raise RetrieverError(
                f"embedding service returned a malformed vector for {self.endpoint}")
        return np.asarray(vectors[0], dtype=np.float64)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; zero vectors score 0 rather than dividing by zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))
