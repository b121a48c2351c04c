"""Exact (brute-force) vector store over pre-chunked, pre-embedded documents."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus data."""


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    text: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise CorpusError(f"record {self.id!r}: vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise CorpusError(f"record {self.id!r}: vector contains non-finite values")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class Corpus:
    records: tuple[EmbeddingRecord, ...]
    dimension: int
    _matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if not records:
            raise CorpusError("empty corpus")
        seen: set[str] = set()
        for rec in records:
            if rec.vector.shape[0] != self.dimension:
                raise CorpusError(
                    f"record {rec.id!r}: dimension {rec.vector.shape[0]} != corpus dimension {self.dimension}"
                )
            if rec.id in seen:
                raise CorpusError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)
        matrix = np.vstack([rec.vector for rec in records])
        matrix.setflags(write=False)
        object.__setattr__(self, "_matrix", matrix)

    @classmethod
    def from_records(cls, records: Iterable[EmbeddingRecord]) -> "Corpus":
        records = tuple(records)
        if not records:
            raise CorpusError("empty corpus")
        return cls(records, records[0].vector.shape[0])

    @property
    def matrix(self) -> np.ndarray:
        """N x D read-only matrix of all vectors, in record order."""
        return self._matrix

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, EmbeddingRecord]:
        return {rec.id: rec for rec in self.records}


@dataclass(frozen=True)
class RetrievedSet:
    query_vector: np.ndarray
    hits: tuple[tuple[EmbeddingRecord, float], ...]

    @property
    def ids(self) -> list[str]:
        return [rec.id for rec, _ in self.hits]

    @property
    def scores(self) -> list[float]:
        return [score for _, score in self.hits]

    @property
    def vectors(self) -> np.ndarray:
        return np.vstack([rec.vector for rec, _ in self.hits])

    @property
    def texts(self) -> list[str]:
        return [rec.text for rec, _ in self.hits]

    def __len__(self) -> int:
        return len(self.hits)


@dataclass(frozen=True)
class Centroid:
    vector: np.ndarray


def ingest_jsonl(path: str | Path) -> Corpus:
    """Load a corpus from JSONL lines of ``{"id", "text", "vector"}``.

    Errors name the 1-based line number of the offending record.
    """
    path = Path(path)
    records: list[EmbeddingRecord] = []
    seen: dict[str, int] = {}
    dimension = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec_id, text, vector = obj["id"], obj["text"], obj["vector"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record ({exc})") from None
            if not isinstance(rec_id, str) or not isinstance(text, str) or not isinstance(vector, list):
                raise CorpusError(f"{path}:{lineno}: malformed record (bad field types)")
            try:
                values = [float(v) for v in vector]
            except (TypeError, ValueError):
                raise CorpusError(f"{path}:{lineno}: vector must contain numbers") from None
            if not all(math.isfinite(v) for v in values):
                raise CorpusError(f"{path}:{lineno}: vector contains non-finite values")
            if dimension is None:
                dimension = len(values)
                if dimension == 0:
                    raise CorpusError(f"{path}:{lineno}: empty vector")
            elif len(values) != dimension:
                raise CorpusError(
                    f"{path}:{lineno}: dimension mismatch (got {len(values)}, expected {dimension})"
                )
            if rec_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {rec_id!r} (first seen on line {seen[rec_id]})")
            seen[rec_id] = lineno
            records.append(EmbeddingRecord(rec_id, text, np.array(values)))
    if not records:
        raise CorpusError(f"{path}: empty corpus")
    return Corpus(tuple(records), dimension)


def _as_query(corpus: Corpus, query) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != corpus.dimension:
        raise CorpusError(f"query dimension {q.shape} does not match corpus dimension {corpus.dimension}")
    if not np.all(np.isfinite(q)):
        raise CorpusError("query vector contains non-finite values")
    if not np.any(q):
        raise CorpusError("zero-norm query vector")
    return q


def top_k(corpus: Corpus, query, k: int) -> RetrievedSet:
    """Return the ``k`` records most cosine-similar to ``query``.

    Ties (scores equal to 12 decimals) are broken by ascending id.
    Zero-norm stored vectors score 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q = _as_query(corpus, query)
    m = corpus.matrix
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    scores = (m @ q) / (safe * np.linalg.norm(q))
    scores = np.where(norms > 0, scores, 0.0)
    ids = np.array([rec.id for rec in corpus.records])
    # rounding makes mathematically tied scores tie exactly, so ids decide
    order = np.lexsort((ids, -np.round(scores, 12)))[:k]
    hits = tuple((corpus.records[i], float(scores[i])) for i in order)
    q = q.copy()
    q.setflags(write=False)
    return RetrievedSet(q, hits)


def centroid_of(hits: RetrievedSet | Sequence[np.ndarray]) -> Centroid:
    """Componentwise mean of the retrieved vectors."""
    if isinstance(hits, RetrievedSet):
        if len(hits) == 0:
            raise ValueError("cannot take the centroid of an empty set")
        vectors = hits.vectors
    else:
        if len(hits) == 0:
            raise ValueError("cannot take the centroid of an empty set")
        vectors = np.vstack([np.asarray(v, dtype=np.float64) for v in hits])
    return Centroid(vectors.mean(axis=0))


def write_retrieved_csv(hits: RetrievedSet, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "rank", "score"])
        for rank, (rec, score) in enumerate(hits.hits, start=1):
            writer.writerow([rec.id, rank, repr(score)])
