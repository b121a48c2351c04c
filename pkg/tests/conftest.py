import json

import numpy as np
import pytest

from ragprune.vector_store import Corpus, EmbeddingRecord, RetrievedSet, top_k


def write_corpus(path, vectors, texts=None, ids=None):
    with open(path, "w", encoding="utf-8") as fh:
        for i, v in enumerate(vectors):
            rec = {
                "id": ids[i] if ids else f"d{i:03d}",
                "text": texts[i] if texts else f"document {i}",
                "vector": [float(x) for x in v],
            }
            fh.write(json.dumps(rec) + "\n")
    return path


def hits_from(vectors, query, ids=None) -> RetrievedSet:
    """All records retrieved, in cosine order."""
    ids = ids or [f"d{i:03d}" for i in range(len(vectors))]
    corpus = Corpus.from_records(EmbeddingRecord(i, f"text {i}", v) for i, v in zip(ids, vectors))
    return top_k(corpus, query, len(corpus))


def sphere(rng, n, dim):
    """Uniform unit directions."""
    u = rng.normal(size=(n, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def ball(rng, n, dim, radius=1.0):
    u = sphere(rng, n, dim)
    return u * radius * rng.uniform(0.0, 1.0, (n, 1)) ** (1.0 / dim)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance and shown after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
