"""Response-quality evaluation against ground truth.

For each question the filtered and original responses are compared with the
ground-truth answer under two similarities (embedding cosine and TF-IDF).
The relative gain of the filtered response is the improvement; the batch
reports its mean and the running mean as questions accumulate.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ragprune.embedder import EmbedderError, EmbeddingProvider

log = logging.getLogger(__name__)

SKIP_EPS = 1e-9
_TOKEN_RE = re.compile(r"[^\W_]+")


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


class TfidfModel:
    """Smoothed TF-IDF: raw counts times ln((1+n)/(1+df)) + 1, L2-normalized."""

    def __init__(self, corpus: Iterable[str]):
        docs = [set(tokenize(t)) for t in corpus]
        self.n_docs = len(docs)
        df = Counter(tok for doc in docs for tok in doc)
        self.idf = {tok: math.log((1 + self.n_docs) / (1 + c)) + 1.0 for tok, c in df.items()}

    def vector(self, text: str) -> dict[str, float]:
        counts = Counter(tokenize(text))
        # terms unseen in the corpus get df = 0
        default = math.log(1 + self.n_docs) + 1.0
        vec = {tok: c * self.idf.get(tok, default) for tok, c in counts.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        return {tok: v / norm for tok, v in vec.items()} if norm > 0 else {}

    def similarity(self, a: str, b: str) -> float:
        va, vb = self.vector(a), self.vector(b)
        if not va and not vb:
            log.warning("both texts are tokenless; TF-IDF similarity defined as 0")
            return 0.0
        # fixed summation order keeps the result exactly symmetric
        shared = sorted(va.keys() & vb.keys())
        return min(1.0, math.fsum(va[tok] * vb[tok] for tok in shared))


def tfidf_similarity(a: str, b: str, idf_corpus: Sequence[str]) -> float:
    return TfidfModel(idf_corpus).similarity(a, b)


def improvement(sim_filtered: float, sim_original: float) -> float | None:
    """Relative similarity gain; None (skipped) when the baseline similarity is ~0."""
    if abs(sim_original) < SKIP_EPS:
        return None
    return (sim_filtered - sim_original) / sim_original


def running_mean(values: Sequence[float]) -> list[float]:
    out, total = [], 0.0
    for j, v in enumerate(values, start=1):
        total += v
        out.append(total / j)
    return out


@dataclass(frozen=True)
class ResponseTriple:
    question_id: str
    ground_truth: str
    filtered_response: str
    original_response: str
    embeddings: dict[str, Sequence[float]] | None = None

    def __post_init__(self):
        for name in ("ground_truth", "filtered_response", "original_response"):
            if not getattr(self, name).strip():
                raise ValueError(f"question {self.question_id!r}: {name} is empty")

    @property
    def texts(self) -> tuple[str, str, str]:
        return self.ground_truth, self.filtered_response, self.original_response


@dataclass
class QuestionResult:
    question_id: str
    emb_sim_filtered: float
    emb_sim_original: float
    tfidf_sim_filtered: float
    tfidf_sim_original: float
    emb_improvement: float | None
    tfidf_improvement: float | None

    @property
    def skipped(self) -> bool:
        return self.emb_improvement is None or self.tfidf_improvement is None


@dataclass
class ImprovementReport:
    per_question: list[QuestionResult]
    average_emb: float | None
    average_tfidf: float | None
    running_emb: list[float]
    running_tfidf: list[float]
    n_questions: int
    config_echo: dict = field(default_factory=dict)
    experiment_id: str = ""
    question_category: str = ""
    avg_docs_kept: float | None = None

    @property
    def n_effective_emb(self) -> int:
        return len(self.running_emb)

    @property
    def n_effective_tfidf(self) -> int:
        return len(self.running_tfidf)


def load_triples(path: str | Path) -> list[ResponseTriple]:
    triples = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                triples.append(
                    ResponseTriple(
                        str(obj["question_id"]),
                        obj["ground_truth"],
                        obj["filtered_response"],
                        obj["original_response"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad triple ({exc})") from None
    return triples


def _embeddings_for(triple: ResponseTriple, embedder: EmbeddingProvider | None):
    if triple.embeddings is not None:
        e = triple.embeddings
        return e["ground_truth"], e["filtered_response"], e["original_response"]
    if embedder is None:
        raise ValueError(f"question {triple.question_id!r}: no embedder and no precomputed embeddings")
    try:
        return embedder.embed(list(triple.texts))
    except EmbedderError as exc:
        raise EmbedderError(f"question {triple.question_id!r}: {exc}") from exc


def evaluate_batch(
    triples: Sequence[ResponseTriple],
    embedder: EmbeddingProvider | None,
    config_echo: dict | None = None,
    **metadata,
) -> ImprovementReport:
    """Score every triple and aggregate improvements over non-skipped questions.

    IDF statistics are fit on all 3N response texts of the batch.
    """
    if not triples:
        raise ValueError("no questions to evaluate")
    tfidf = TfidfModel(t for tr in triples for t in tr.texts)
    results = []
    for tr in triples:
        g, f, o = _embeddings_for(tr, embedder)
        ef, eo = cosine_similarity(f, g), cosine_similarity(o, g)
        tf, to = tfidf.similarity(tr.filtered_response, tr.ground_truth), tfidf.similarity(
            tr.original_response, tr.ground_truth
        )
        r = QuestionResult(tr.question_id, ef, eo, tf, to, improvement(ef, eo), improvement(tf, to))
        if r.skipped:
            log.warning("question %s has a near-zero baseline similarity; skipped in averages", tr.question_id)
        results.append(r)

    run_emb = running_mean([r.emb_improvement for r in results if r.emb_improvement is not None])
    run_tfidf = running_mean([r.tfidf_improvement for r in results if r.tfidf_improvement is not None])
    return ImprovementReport(
        per_question=results,
        average_emb=run_emb[-1] if run_emb else None,
        average_tfidf=run_tfidf[-1] if run_tfidf else None,
        running_emb=run_emb,
        running_tfidf=run_tfidf,
        n_questions=len(results),
        config_echo=config_echo or {},
        **metadata,
    )


SUMMARY_COLUMNS = [
    "experiment_id",
    "method",
    "alpha",
    "min_freq",
    "percentile",
    "question_category",
    "n_questions",
    "n_effective_emb",
    "n_effective_tfidf",
    "emb_pct",
    "tfidf_pct",
    "avg_docs_kept",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_row(report: ImprovementReport) -> dict[str, str]:
    cfg = report.config_echo
    weighting = cfg.get("weighting", {})
    return {
        "experiment_id": report.experiment_id,
        "method": _fmt(cfg.get("method")),
        "alpha": _fmt(weighting.get("alpha")),
        "min_freq": _fmt(cfg.get("min_outlier_freq")),
        "percentile": _fmt(cfg.get("percentile")),
        "question_category": report.question_category,
        "n_questions": str(report.n_questions),
        "n_effective_emb": str(report.n_effective_emb),
        "n_effective_tfidf": str(report.n_effective_tfidf),
        "emb_pct": _fmt(None if report.average_emb is None else 100.0 * report.average_emb),
        "tfidf_pct": _fmt(None if report.average_tfidf is None else 100.0 * report.average_tfidf),
        "avg_docs_kept": _fmt(report.avg_docs_kept),
    }


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def export_summary(
    report: ImprovementReport,
    path: str | Path,
    per_question_path: str | Path | None = None,
    running_path: str | Path | None = None,
) -> None:
    """Write the one-row summary CSV plus per-question and running-average CSVs.

    The companion files default to ``per_question.csv`` and
    ``running_avg.csv`` next to ``path``.
    """
    path = Path(path)
    per_question_path = Path(per_question_path or path.with_name("per_question.csv"))
    running_path = Path(running_path or path.with_name("running_avg.csv"))

    row = summary_row(report)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([row[c] for c in SUMMARY_COLUMNS])

    with per_question_path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(
            [
                "question_id",
                "emb_sim_filtered",
                "emb_sim_original",
                "emb_improvement",
                "tfidf_sim_filtered",
                "tfidf_sim_original",
                "tfidf_improvement",
                "skipped",
            ]
        )
        for r in report.per_question:
            w.writerow(
                [
                    r.question_id,
                    _fmt(r.emb_sim_filtered),
                    _fmt(r.emb_sim_original),
                    _fmt(r.emb_improvement),
                    _fmt(r.tfidf_sim_filtered),
                    _fmt(r.tfidf_sim_original),
                    _fmt(r.tfidf_improvement),
                    "true" if r.skipped else "false",
                ]
            )

    with running_path.open("w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["n", "avg_emb_improvement", "avg_tfidf_improvement"])
        for j in range(max(len(report.running_emb), len(report.running_tfidf))):
            emb = report.running_emb[j] if j < len(report.running_emb) else None
            tf = report.running_tfidf[j] if j < len(report.running_tfidf) else None
            w.writerow([j + 1, _fmt(emb), _fmt(tf)])
