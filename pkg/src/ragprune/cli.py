"""Command-line entry point: ingest-check, retrieve, filter, prompt, eval, report.

Exit codes: 2 configuration error, 3 data error, 4 embedder error.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path

import click
import numpy as np

from ragprune.embedder import (
    EmbedderEndpoint,
    EmbedderError,
    EmbeddingCache,
    HttpEmbedder,
    OfflineEmbedder,
)
from ragprune.evaluation import SUMMARY_COLUMNS, evaluate_batch, export_summary, load_triples
from ragprune.features import FeatureMethod, WeightingParams
from ragprune.numerics.gmm import responsibilities
from ragprune.numerics.outliers import write_scatter_csv
from ragprune.pipeline import FilterResult, SweepConfig, prune_context
from ragprune.prompting import build_prompt_bundle
from ragprune.vector_store import CorpusError, centroid_of, ingest_jsonl, top_k, write_retrieved_csv

log = logging.getLogger("ragprune")


class ConfigError(click.ClickException):
    exit_code = 2


class DataError(click.ClickException):
    exit_code = 3


class EmbedderFailure(click.ClickException):
    exit_code = 4


# written to config_echo.json for the record, ignored when it is reused as --config
ECHO_ONLY_KEYS = ("cell_seeds", "triples", "experiment_id", "category")


@dataclass
class RunConfig:
    corpus: str | None = None
    query: str | None = None
    query_vector: str | None = None
    question: str | None = None
    embedder_url: str | None = None
    embed_cache: str | None = None
    expected_dim: int | None = None
    timeout: float = 30.0
    method: str = "interaction"
    alpha: float = 0.5
    epsilon: float = 1e-8
    weighting_applies_to: str = "all_methods"
    percentile: float = 15.0
    clusters: tuple[int, ...] = (4, 5, 6)
    pca_dims: tuple[int, ...] = (2, 3)
    min_freq: int = 2
    num_docs: int = 20
    seed: int = 0
    max_iterations: int = 200
    rel_tolerance: float = 1e-6
    covariance_regularizer: float = 1e-6
    restarts: int = 1

    @classmethod
    def load(cls, config_path: str | None, overrides: dict) -> "RunConfig":
        """Merge a JSON config file with command-line overrides (flags win)."""
        values: dict = {}
        if config_path:
            try:
                values = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from None
            if not isinstance(values, dict):
                raise ConfigError(f"config {config_path} must hold a JSON object")
            for key in ECHO_ONLY_KEYS:
                values.pop(key, None)
        values.update({k: v for k, v in overrides.items() if v is not None})
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("clusters", "pca_dims"):
            if key in values:
                values[key] = _int_list(values[key], key)
        cfg = cls(**values)
        cfg.sweep()  # validate early
        return cfg

    def sweep(self) -> SweepConfig:
        try:
            return SweepConfig(
                method=FeatureMethod.parse(self.method),
                weighting=WeightingParams(self.alpha, self.epsilon, self.weighting_applies_to),
                percentile=float(self.percentile),
                cluster_counts=self.clusters,
                pca_dims=self.pca_dims,
                min_outlier_freq=int(self.min_freq),
                num_docs=int(self.num_docs),
                seed=int(self.seed),
                max_iterations=int(self.max_iterations),
                rel_tolerance=float(self.rel_tolerance),
                covariance_regularizer=float(self.covariance_regularizer),
                restarts=int(self.restarts),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["clusters"] = list(self.clusters)
        d["pca_dims"] = list(self.pca_dims)
        d["cell_seeds"] = self.sweep().to_dict()["cell_seeds"]
        return d

    def provider(self, required: bool = True):
        if self.embedder_url and self.embed_cache:
            raise ConfigError("configure exactly one embedding source: --embedder-url or --embed-cache")
        if self.embed_cache:
            try:
                return OfflineEmbedder(self.embed_cache)
            except EmbedderError as exc:
                raise EmbedderFailure(str(exc)) from None
        if self.embedder_url:
            try:
                endpoint = EmbedderEndpoint(self.embedder_url, float(self.timeout), self.expected_dim)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            return HttpEmbedder(endpoint, EmbeddingCache())
        if required:
            raise ConfigError("no embedding source configured (--embedder-url or --embed-cache)")
        return None


def _int_list(value, name: str) -> tuple[int, ...]:
    try:
        if isinstance(value, str):
            return tuple(int(v) for v in value.split(",") if v.strip())
        return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a comma-separated list of integers, got {value!r}") from None


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_corpus(path: str | None):
    if not path:
        raise ConfigError("--corpus is required")
    try:
        return ingest_jsonl(path)
    except FileNotFoundError:
        raise DataError(f"corpus file not found: {path}") from None
    except CorpusError as exc:
        raise DataError(str(exc)) from None


def _query_vector(cfg: RunConfig) -> np.ndarray:
    if bool(cfg.query) == bool(cfg.query_vector):
        raise ConfigError("give exactly one of --query or --query-vector")
    if cfg.query_vector:
        try:
            return np.asarray(json.loads(Path(cfg.query_vector).read_text(encoding="utf-8")), dtype=np.float64)
        except FileNotFoundError:
            raise DataError(f"query vector file not found: {cfg.query_vector}") from None
        except (json.JSONDecodeError, TypeError, ValueError) as exc:
            raise DataError(f"bad query vector file {cfg.query_vector}: {exc}") from None
    provider = cfg.provider()
    try:
        return provider.embed([cfg.query])[0]
    except EmbedderError as exc:
        raise EmbedderFailure(f"embedding the query failed: {exc}") from None


def _retrieve(cfg: RunConfig):
    corpus = _load_corpus(cfg.corpus)
    q = _query_vector(cfg)
    try:
        return top_k(corpus, q, int(cfg.num_docs))
    except (CorpusError, ValueError) as exc:
        raise DataError(str(exc)) from None


def _scatter(result: FilterResult, path: Path) -> None:
    cells = [c for c in result.per_cell_decisions if c.model is not None]
    if not cells:
        log.warning("no fitted sweep cell; scatter not written")
        return
    two_d = [c for c in cells if c.effective_r == 2]
    cell = two_d[0] if two_d else cells[0]
    labels = np.argmax(responsibilities(cell.model, cell.reduced), axis=1)
    coords = cell.reduced[:, :2]
    if coords.shape[1] < 2:
        coords = np.column_stack([coords, np.zeros(len(coords))])
    write_scatter_csv(coords, labels, cell.decision, path)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sweep_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), help="JSON config; flags override it."),
        click.option("--method", help="concatenate | weighted_sum | interaction | polynomial[:DEGREE]"),
        click.option("--alpha", type=float),
        click.option("--epsilon", type=float),
        click.option("--weighting-applies-to", type=click.Choice(["all_methods", "none"])),
        click.option("--percentile", type=float),
        click.option("--clusters", help="Comma-separated GMM component counts, e.g. 4,5,6"),
        click.option("--pca-dims", help="Comma-separated PCA dimensions, e.g. 2,3"),
        click.option("--min-freq", type=int, help="Minimum number of sweep cells that must flag a document."),
        click.option("--num-docs", type=int, help="Documents to retrieve."),
        click.option("--seed", type=int),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _source_options(f):
    opts = [
        click.option("--corpus", type=click.Path(), help="Corpus JSONL."),
        click.option("--query", help="Query text (embedded with the configured provider)."),
        click.option("--query-vector", type=click.Path(), help="JSON array holding the query embedding."),
        click.option("--question", help="Question for the prompts (defaults to --query)."),
        click.option("--embedder-url"),
        click.option("--embed-cache", type=click.Path(), help="Offline embedding cache JSONL."),
        click.option("--expected-dim", type=int),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """Prune retrieved RAG context by GMM outlier detection and evaluate the effect."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


@main.command("ingest-check")
@click.option("--corpus", required=True, type=click.Path())
def ingest_check(corpus: str):
    """Validate a corpus file and print its size and dimension."""
    c = _load_corpus(corpus)
    click.echo(f"{len(c)} records, dimension {c.dimension}")


@main.command()
@_source_options
@_sweep_options
@click.option("--out-dir", required=True, type=click.Path())
def retrieve(config_path, out_dir, **flags):
    """Write the top-k retrieved documents as retrieved.csv."""
    cfg = RunConfig.load(config_path, flags)
    hits = _retrieve(cfg)
    write_retrieved_csv(hits, _out_dir(out_dir) / "retrieved.csv")


@main.command("filter")
@_source_options
@_sweep_options
@click.option("--out-dir", required=True, type=click.Path())
def filter_cmd(config_path, out_dir, **flags):
    """Retrieve, detect outlier documents and write filtered/original prompts."""
    cfg = RunConfig.load(config_path, flags)
    sweep = cfg.sweep()
    question = cfg.question or cfg.query
    if not question:
        raise ConfigError("--question is required when the query is given as a vector")
    hits = _retrieve(cfg)
    try:
        result = prune_context(hits, centroid_of(hits), sweep)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    out = _out_dir(out_dir)
    texts = {rec.id: rec.text for rec, _ in hits.hits}
    bundle = build_prompt_bundle(
        [texts[i] for i in result.kept_ids], [texts[i] for i in result.original_ids], question
    )
    result.write_json(out / "filter_result.json", sweep)
    (out / "filtered_prompt.txt").write_text(bundle.filtered_prompt, encoding="utf-8")
    (out / "original_prompt.txt").write_text(bundle.original_prompt, encoding="utf-8")
    write_retrieved_csv(hits, out / "retrieved.csv")
    _scatter(result, out / "scatter.csv")
    _write_json(out / "config_echo.json", cfg.echo())
    click.echo(
        f"kept {len(result.kept_ids)}/{len(hits)} documents; dropped: {', '.join(result.dropped_ids) or 'none'}"
    )


@main.command()
@click.option("--question", required=True)
@click.option("--docs", type=click.Path(), help="Text file with one document per line.")
@click.option("--corpus", type=click.Path())
@click.option("--filter-result", type=click.Path(), help="filter_result.json from the filter command.")
@click.option("--which", type=click.Choice(["filtered", "original"]), default="filtered", show_default=True)
def prompt(question, docs, corpus, filter_result, which):
    """Print an assembled prompt to standard output."""
    from ragprune.prompting import build_prompt

    if docs:
        try:
            texts = Path(docs).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(str(exc)) from None
    elif corpus and filter_result:
        records = _load_corpus(corpus).by_id()
        try:
            fr = json.loads(Path(filter_result).read_text(encoding="utf-8"))
            ids = fr["kept_ids" if which == "filtered" else "original_ids"]
            texts = [records[i].text for i in ids]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise DataError(f"bad filter result {filter_result}: {exc}") from None
    else:
        raise ConfigError("give --docs, or --corpus together with --filter-result")
    try:
        click.echo(build_prompt(texts, question), nl=False)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@main.command("eval")
@click.option("--triples", required=True, type=click.Path())
@click.option("--embedder-url")
@click.option("--embed-cache", type=click.Path())
@click.option("--expected-dim", type=int)
@click.option("--experiment-id", default="", help="Label for the summary row.")
@click.option("--category", default="", help="Question category for the summary row.")
@click.option(
    "--filter-result",
    "filter_results",
    multiple=True,
    type=click.Path(),
    help="filter_result.json files; their mean kept count fills avg_docs_kept.",
)
@_sweep_options
@click.option("--out-dir", required=True, type=click.Path())
def eval_cmd(triples, config_path, out_dir, experiment_id, category, filter_results, **flags):
    """Score filtered vs original responses against ground truth."""
    cfg = RunConfig.load(config_path, flags)
    try:
        batch = load_triples(triples)
    except FileNotFoundError:
        raise DataError(f"triples file not found: {triples}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if not batch:
        raise DataError("no questions")

    avg_kept = None
    if filter_results:
        kept = []
        for p in filter_results:
            try:
                kept.append(len(json.loads(Path(p).read_text(encoding="utf-8"))["kept_ids"]))
            except (OSError, json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"bad filter result {p}: {exc}") from None
        avg_kept = sum(kept) / len(kept)

    provider = cfg.provider()
    echo = cfg.echo()
    try:
        report = evaluate_batch(
            batch,
            provider,
            config_echo=cfg.sweep().to_dict(),
            experiment_id=experiment_id,
            question_category=category,
            avg_docs_kept=avg_kept,
        )
    except EmbedderError as exc:
        raise EmbedderFailure(str(exc)) from None
    except ValueError as exc:
        raise DataError(str(exc)) from None

    out = _out_dir(out_dir)
    export_summary(report, out / "summary.csv")
    echo.update({"triples": triples, "experiment_id": experiment_id, "category": category})
    _write_json(out / "config_echo.json", echo)
    click.echo(
        f"{report.n_questions} questions; emb {_pct(report.average_emb)}, tfidf {_pct(report.average_tfidf)}"
    )


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:+.2f}%"


@main.command()
@click.argument("summaries", nargs=-1, required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
def report(summaries, out_dir):
    """Stack summary.csv files from several eval runs into one experiments table."""
    rows = []
    for path in summaries:
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames != SUMMARY_COLUMNS:
                    raise DataError(f"{path} is not a summary CSV")
                rows.extend(reader)
        except OSError as exc:
            raise DataError(str(exc)) from None
    out = _out_dir(out_dir) / "experiments.csv"
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    click.echo(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
