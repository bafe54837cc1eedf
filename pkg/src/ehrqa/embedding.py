"""Embedding backends, cosine similarity, and an exact top-k vector index.

Search is exact (score every entry, sort) — index sizes here are tables per
schema and chunks per patient, at most thousands, so an ANN structure would
only blur the correctness oracle. Ties break by ascending key so rankings
are reproducible regardless of insertion order.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .model import tokenize

Vector = tuple[float, ...]

INDEX_FORMAT_VERSION = 1


class EmbeddingError(Exception):
    pass


class DimensionMismatchError(EmbeddingError):
    pass


class ZeroNormError(EmbeddingError):
    pass


class DuplicateKeyError(EmbeddingError):
    pass


def constant_unit_vector(dimension: int) -> Vector:
    v = 1.0 / math.sqrt(dimension)
    return tuple(v for _ in range(dimension))


def unit_normalize(values: Sequence[float], dimension: int) -> Vector:
    norm = math.sqrt(sum(x * x for x in values))
    if norm == 0.0:
        # degenerate input (empty text, or exact bucket cancellation in the
        # hash backend) maps to the constant vector rather than erroring
        return constant_unit_vector(dimension)
    return tuple(x / norm for x in values)


class HashEmbeddingBackend:
    """Deterministic token-hash projection with signed buckets.

    Each casefolded token is hashed (sha256, unsalted) into one of
    ``dimension`` buckets with a +/-1 sign, then the sum is normalized.
    The vectors are stable but NOT semantic — this backend exists so the
    pipeline and its tests run fully offline.
    """

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    @property
    def backend_id(self) -> str:
        return f"hash-{self.dimension}"

    def embed(self, text: str) -> list[float]:
        values = [0.0] * self.dimension
        for token in tokenize(text):
            h = int.from_bytes(hashlib.sha256(token.casefold().encode("utf-8")).digest()[:8], "big")
            bucket = h % self.dimension
            sign = 1.0 if (h // self.dimension) % 2 == 0 else -1.0
            values[bucket] += sign
        return values


class RemoteEmbeddingBackend:
    """HTTP embedding backend speaking the common /embeddings contract."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        dimension: int,
        api_key_env: str = "EHRQA_API_KEY",
        timeout_s: float = 60.0,
        transport=None,
    ):
        import httpx

        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key_env = api_key_env
        self._client = httpx.Client(transport=transport, timeout=timeout_s)

    @property
    def backend_id(self) -> str:
        return f"remote-{self.model}-{self.dimension}"

    def embed(self, text: str) -> list[float]:
        import os

        import httpx

        headers = {}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._client.post(
                f"{self.endpoint}/embeddings",
                json={"model": self.model, "input": text},
                headers=headers,
            )
            resp.raise_for_status()
            return list(resp.json()["data"][0]["embedding"])
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise EmbeddingError(f"embedding backend failed: {exc}") from exc


def embed(text: str, backend) -> Vector:
    """Embed text and unit-normalize. Empty text maps to the constant vector."""
    return unit_normalize(backend.embed(text), backend.dimension)


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    if len(u) != len(v):
        raise DimensionMismatchError(f"dimensions differ: {len(u)} vs {len(v)}")
    norm_u = math.sqrt(sum(x * x for x in u))
    norm_v = math.sqrt(sum(x * x for x in v))
    if norm_u == 0.0 or norm_v == 0.0:
        raise ZeroNormError("cosine is undefined for a zero-norm operand")
    return sum(a * b for a, b in zip(u, v)) / (norm_u * norm_v)


class VectorIndex:
    """Exact in-memory index; read-many once built, writes take the lock."""

    def __init__(self, dimension: int):
        self.dimension = dimension
        self._entries: dict[str, tuple[Vector, str]] = {}
        self._lock = threading.Lock()

    def add(self, key: str, vector: Sequence[float], payload_digest: str = "") -> None:
        if len(vector) != self.dimension:
            raise DimensionMismatchError(f"vector has dimension {len(vector)}, index wants {self.dimension}")
        if any(not math.isfinite(x) for x in vector):
            raise EmbeddingError(f"non-finite vector entry for key {key!r}")
        with self._lock:
            if key in self._entries:
                raise DuplicateKeyError(f"duplicate index key {key!r}")
            self._entries[key] = (tuple(vector), payload_digest)

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self) -> list[str]:
        return list(self._entries)

    def vector(self, key: str) -> Vector:
        return self._entries[key][0]

    def top_k(self, query: Sequence[float], k: int, keys: Optional[Iterable[str]] = None) -> list[tuple[str, float]]:
        """Exact top-k by cosine; ties broken by ascending key.

        ``keys`` optionally restricts scoring to a candidate subset.
        """
        if k < 0:
            raise ValueError("k must be >= 0")
        if len(query) != self.dimension:
            raise DimensionMismatchError(f"query has dimension {len(query)}, index wants {self.dimension}")
        pool = self._entries.keys() if keys is None else [key for key in keys if key in self._entries]
        scored = [(key, cosine(query, self._entries[key][0])) for key in pool]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[:k]


def save_index(index: VectorIndex, path: str | Path, backend_id: str, corpus_fingerprint: str) -> None:
    payload = {
        "version": INDEX_FORMAT_VERSION,
        "backend_id": backend_id,
        "corpus_fingerprint": corpus_fingerprint,
        "dimension": index.dimension,
        "entries": [[key, list(vec), payload] for key, (vec, payload) in index._entries.items()],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path, backend_id: str, corpus_fingerprint: str) -> Optional[VectorIndex]:
    """Load a persisted index; returns None when missing or stale."""
    p = Path(path)
    if not p.exists():
        return None
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if (
        payload.get("version") != INDEX_FORMAT_VERSION
        or payload.get("backend_id") != backend_id
        or payload.get("corpus_fingerprint") != corpus_fingerprint
    ):
        return None
    index = VectorIndex(payload["dimension"])
    for key, vec, payload_digest in payload["entries"]:
        index.add(key, vec, payload_digest)
    return index
