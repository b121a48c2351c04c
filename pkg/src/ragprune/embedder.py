"""Embedding providers: an HTTP client with a write-through cache and an offline cache reader.

Wire contract: ``POST {base_url}/embed`` with ``{"texts": [...]}`` answers
``{"embeddings": [[...], ...]}``. The cache is JSONL keyed by the SHA-256
of each text's UTF-8 bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx
import numpy as np


class EmbedderError(RuntimeError):
    """Base class for embedding failures."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class EmbedderNetworkError(EmbedderError):
    pass


class EmbedderStatusError(EmbedderError):
    def __init__(self, message: str, status_code: int, index: int | None = None):
        super().__init__(message, index)
        self.status_code = status_code


class DimensionMismatchError(EmbedderError):
    pass


class MalformedResponseError(EmbedderError):
    pass


class MissingEmbeddingError(EmbedderError):
    def __init__(self, message: str, missing: list[str]):
        super().__init__(message)
        self.missing = missing


class CorruptCacheError(EmbedderError):
    pass


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[np.ndarray]: ...


def text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class EmbedderEndpoint:
    base_url: str
    timeout: float = 30.0
    expected_dim: int | None = None

    def __post_init__(self):
        if not self.timeout > 0:
            raise ValueError("timeout must be positive")


class EmbeddingCache:
    """Hash-keyed vector store backed by an append-only JSONL file."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._vectors: dict[str, np.ndarray] = {}
        self._dim: int | None = None
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    key, vector = obj["hash"], [float(v) for v in obj["vector"]]
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise CorruptCacheError(f"{self.path}:{lineno}: corrupt cache entry ({exc})") from None
                if not vector or not all(math.isfinite(v) for v in vector):
                    raise CorruptCacheError(f"{self.path}:{lineno}: empty or non-finite vector")
                if self._dim is None:
                    self._dim = len(vector)
                elif len(vector) != self._dim:
                    raise CorruptCacheError(f"{self.path}:{lineno}: vector dimension {len(vector)} != {self._dim}")
                self._vectors[key] = np.array(vector)

    @property
    def dimension(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, text: str) -> np.ndarray | None:
        return self._vectors.get(text_hash(text))

    def put_many(self, texts: Sequence[str], vectors: Sequence[Sequence[float]]) -> None:
        with self._lock:
            lines = []
            for text, vec in zip(texts, vectors):
                arr = np.asarray(vec, dtype=np.float64)
                if self._dim is None:
                    self._dim = arr.shape[0]
                elif arr.shape[0] != self._dim:
                    raise DimensionMismatchError(f"cache holds dimension {self._dim}, got {arr.shape[0]}")
                key = text_hash(text)
                if key in self._vectors:
                    continue
                self._vectors[key] = arr
                lines.append(json.dumps({"hash": key, "text_preview": text[:40], "vector": arr.tolist()}))
            if lines and self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")


def write_cache(path: str | Path, texts: Sequence[str], vectors: Sequence[Sequence[float]]) -> None:
    """Create (or extend) a cache file from known text/vector pairs."""
    EmbeddingCache(path).put_many(texts, vectors)


class HttpEmbedder:
    def __init__(
        self,
        endpoint: EmbedderEndpoint,
        cache: EmbeddingCache | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.cache = cache if cache is not None else EmbeddingCache()
        self._client = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"), timeout=endpoint.timeout, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return embed_texts(self.endpoint, texts, cache=self.cache, client=self._client)


def embed_texts(
    endpoint: EmbedderEndpoint,
    texts: Sequence[str],
    cache: EmbeddingCache | None = None,
    client: httpx.Client | None = None,
) -> list[np.ndarray]:
    """Embed ``texts`` in order, asking the server only for cache misses."""
    texts = list(texts)
    if not texts:
        raise ValueError("texts must be non-empty")
    cache = cache if cache is not None else EmbeddingCache()
    out: list[np.ndarray | None] = [cache.get(t) for t in texts]
    missing = [i for i, v in enumerate(out) if v is None]

    if missing:
        # duplicates within one request are sent once
        unique: dict[str, list[int]] = {}
        for i in missing:
            unique.setdefault(texts[i], []).append(i)
        batch = list(unique)
        own_client = client is None
        client = client or httpx.Client(base_url=endpoint.base_url.rstrip("/"), timeout=endpoint.timeout)
        try:
            response = client.post("/embed", json={"texts": batch})
        except httpx.HTTPError as exc:
            raise EmbedderNetworkError(
                f"embedding request failed at index {unique[batch[0]][0]}: {exc}", unique[batch[0]][0]
            ) from exc
        finally:
            if own_client:
                client.close()
        if response.status_code != 200:
            raise EmbedderStatusError(
                f"embedding server returned HTTP {response.status_code} for batch starting at index "
                f"{unique[batch[0]][0]}",
                response.status_code,
                unique[batch[0]][0],
            )
        try:
            vectors = response.json()["embeddings"]
        except (ValueError, KeyError, TypeError):
            raise MalformedResponseError("response lacks an 'embeddings' list", unique[batch[0]][0]) from None
        if not isinstance(vectors, list) or len(vectors) != len(batch):
            raise MalformedResponseError(
                f"expected {len(batch)} embeddings, got {len(vectors) if isinstance(vectors, list) else 'none'}"
            )

        checked = []
        for text, vec in zip(batch, vectors):
            index = unique[text][0]
            try:
                arr = np.asarray(vec, dtype=np.float64)
            except (TypeError, ValueError):
                raise MalformedResponseError(f"embedding at index {index} is not numeric", index) from None
            if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
                raise MalformedResponseError(f"embedding at index {index} is malformed", index)
            if endpoint.expected_dim is not None and arr.shape[0] != endpoint.expected_dim:
                raise DimensionMismatchError(
                    f"embedding at index {index} has dimension {arr.shape[0]}, expected {endpoint.expected_dim}",
                    index,
                )
            if cache.dimension is not None and arr.shape[0] != cache.dimension:
                raise DimensionMismatchError(
                    f"embedding at index {index} has dimension {arr.shape[0]}, cache holds {cache.dimension}",
                    index,
                )
            checked.append(arr)
        cache.put_many(batch, checked)
        for text, arr in zip(batch, checked):
            for i in unique[text]:
                out[i] = arr

    if endpoint.expected_dim is not None:
        for i, v in enumerate(out):
            if v.shape[0] != endpoint.expected_dim:
                raise DimensionMismatchError(
                    f"cached embedding at index {i} has dimension {v.shape[0]}, expected {endpoint.expected_dim}", i
                )
    return out


class OfflineEmbedder:
    """Answers strictly from a cache file; never touches the network."""

    def __init__(self, cache_path: str | Path):
        path = Path(cache_path)
        if not path.exists():
            raise CorruptCacheError(f"embedding cache not found: {path}")
        self.cache = EmbeddingCache(path)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out, missing = [], []
        for text in texts:
            vec = self.cache.get(text)
            if vec is None:
                missing.append(text_hash(text))
            out.append(vec)
        if missing:
            raise MissingEmbeddingError(f"missing embedding for hash(es): {', '.join(missing)}", missing)
        return out


def offline_provider(cache_path: str | Path) -> OfflineEmbedder:
    return OfflineEmbedder(cache_path)
