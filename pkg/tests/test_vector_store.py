import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import write_corpus
from ragprune.vector_store import (
    Corpus,
    CorpusError,
    EmbeddingRecord,
    centroid_of,
    ingest_jsonl,
    top_k,
    write_retrieved_csv,
)


def _corpus(vectors):
    return Corpus.from_records(EmbeddingRecord(f"d{i:03d}", "", v) for i, v in enumerate(vectors))


def test_ingest_three_records(tmp_path):
    path = write_corpus(tmp_path / "c.jsonl", np.arange(12.0).reshape(3, 4))
    corpus = ingest_jsonl(path)
    assert len(corpus) == 3 and corpus.dimension == 4
    assert [r.id for r in corpus.records] == ["d000", "d001", "d002"]


def test_ingest_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    with pytest.raises(CorpusError, match="empty corpus"):
        ingest_jsonl(tmp_path / "e.jsonl")


def test_ingest_dimension_mismatch_cites_line(tmp_path):
    path = tmp_path / "c.jsonl"
    lines = [
        {"id": "a", "text": "", "vector": [1, 2, 3, 4]},
        {"id": "b", "text": "", "vector": [1, 2, 3, 4, 5]},
    ]
    path.write_text("\n".join(json.dumps(x) for x in lines))
    with pytest.raises(CorpusError, match=r":2: dimension mismatch"):
        ingest_jsonl(path)


@pytest.mark.parametrize(
    "bad, pattern",
    [
        ('{"id": "a", "text": ""}', "malformed"),
        ("not json", "malformed"),
        ('{"id": "a", "text": "", "vector": [1, NaN]}', "non-finite"),
    ],
)
def test_ingest_rejects_bad_lines(tmp_path, bad, pattern):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "ok", "text": "", "vector": [1, 2]}\n' + bad + "\n")
    with pytest.raises(CorpusError, match=pattern):
        ingest_jsonl(path)


def test_ingest_duplicate_id(tmp_path):
    path = write_corpus(tmp_path / "c.jsonl", [[1, 0], [0, 1]], ids=["x", "x"])
    with pytest.raises(CorpusError, match="duplicate id"):
        ingest_jsonl(path)


def test_query_equal_to_stored_vector_ranks_first(rng):
    vectors = rng.normal(size=(10, 6))
    hits = top_k(_corpus(vectors), vectors[7], 3)
    assert hits.ids[0] == "d007"
    assert hits.scores[0] == pytest.approx(1.0, abs=1e-9)


def test_k_equals_corpus_size_returns_all_sorted(rng):
    vectors = rng.normal(size=(8, 3))
    hits = top_k(_corpus(vectors), rng.normal(size=3), 8)
    assert sorted(hits.ids) == [f"d{i:03d}" for i in range(8)]
    assert all(a >= b for a, b in zip(hits.scores, hits.scores[1:]))
    assert len(top_k(_corpus(vectors), np.ones(3), 100)) == 8


def test_top_k_matches_exhaustive_scan():
    rng = np.random.default_rng(2024)
    vectors = rng.normal(size=(50, 8))
    query = rng.normal(size=8)
    # oracle: pure-python cosine over every record, sort by (-score, id)
    scored = []
    for i, v in enumerate(vectors):
        dot = sum(float(a) * float(b) for a, b in zip(v, query))
        nv = sum(float(a) ** 2 for a in v) ** 0.5
        nq = sum(float(b) ** 2 for b in query) ** 0.5
        scored.append((-dot / (nv * nq), f"d{i:03d}"))
    expected = [i for _, i in sorted(scored)[:5]]
    assert top_k(_corpus(vectors), query, 5).ids == expected


def test_ties_break_by_ascending_id():
    corpus = Corpus.from_records(
        [EmbeddingRecord("b", "", [1.0, 0.0]), EmbeddingRecord("a", "", [2.0, 0.0]), EmbeddingRecord("c", "", [0.0, 1.0])]
    )
    assert top_k(corpus, [1.0, 0.0], 3).ids == ["a", "b", "c"]


def test_top_k_errors(rng):
    corpus = _corpus(rng.normal(size=(4, 3)))
    with pytest.raises(CorpusError, match="dimension"):
        top_k(corpus, [1.0, 2.0], 2)
    with pytest.raises(CorpusError, match="zero-norm"):
        top_k(corpus, [0.0, 0.0, 0.0], 2)
    with pytest.raises(ValueError):
        top_k(corpus, [1.0, 0.0, 0.0], 0)


def test_centroid_examples(rng):
    single = centroid_of([np.array([1.0, 2.0, 3.0])])
    np.testing.assert_array_equal(single.vector, [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(centroid_of([np.array([1.0, 0]), np.array([-1.0, 0])]).vector, [0.0, 0.0])

    vectors = rng.normal(size=(20, 8))
    expected = [sum(float(v[j]) for v in vectors) / 20 for j in range(8)]
    hits = top_k(_corpus(vectors), rng.normal(size=8), 20)
    np.testing.assert_allclose(centroid_of(hits).vector, expected, rtol=0, atol=1e-12)
    with pytest.raises(ValueError):
        centroid_of([])


def test_retrieved_csv(tmp_path, rng):
    hits = top_k(_corpus(rng.normal(size=(5, 3))), [1.0, 0, 0], 3)
    write_retrieved_csv(hits, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "id,rank,score"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "2", "3"]


# small integers produce plenty of exact cosine ties
vec_lists = st.lists(st.lists(st.integers(-4, 4), min_size=3, max_size=3), min_size=2, max_size=15)


@settings(max_examples=60, deadline=None)
@given(vec_lists, st.integers(1, 15), st.integers(1, 15), st.floats(0.01, 100))
def test_top_k_properties(vectors, k1, k2, scale):
    corpus = _corpus(np.array(vectors, dtype=float))
    query = np.array([0.3, -1.2, 0.7])
    k1, k2 = sorted((k1, k2))
    small, large = top_k(corpus, query, k1).ids, top_k(corpus, query, k2).ids
    assert large[: len(small)] == small
    assert top_k(corpus, query, k2).ids == large
    assert top_k(corpus, scale * query, k2).ids == large


@settings(max_examples=40, deadline=None)
@given(vec_lists, st.randoms(use_true_random=False))
def test_centroid_permutation_invariant(vectors, rnd):
    arr = [np.array(v, dtype=float) for v in vectors]
    shuffled = arr[:]
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(centroid_of(arr).vector, centroid_of(shuffled).vector, atol=1e-12)
