"""Cluster-count x PCA-dimension sweep, outlier voting and context filtering."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ragprune.features import (
    FeatureMatrix,
    FeatureMethod,
    WeightingParams,
    build_features,
    compute_distances,
    standardize,
)
from ragprune.numerics import (
    GmmConfig,
    GmmFitError,
    GmmModel,
    OutlierDecision,
    detect_outliers,
    gmm_fit,
    gmm_log_likelihood,
    pca_fit_transform,
)
from ragprune.vector_store import Centroid, RetrievedSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    method: FeatureMethod = field(default_factory=lambda: FeatureMethod("interaction"))
    weighting: WeightingParams = field(default_factory=WeightingParams)
    percentile: float = 15.0
    cluster_counts: tuple[int, ...] = (4, 5, 6)
    pca_dims: tuple[int, ...] = (2, 3)
    min_outlier_freq: int = 2
    num_docs: int = 20
    seed: int = 0
    max_iterations: int = 200
    rel_tolerance: float = 1e-6
    covariance_regularizer: float = 1e-6
    restarts: int = 1

    def __post_init__(self):
        object.__setattr__(self, "cluster_counts", tuple(int(k) for k in self.cluster_counts))
        object.__setattr__(self, "pca_dims", tuple(int(r) for r in self.pca_dims))
        if not self.cluster_counts or not self.pca_dims:
            raise ValueError("cluster_counts and pca_dims must be non-empty")
        if min(self.cluster_counts) < 1 or min(self.pca_dims) < 1:
            raise ValueError("cluster counts and PCA dims must be >= 1")
        if not 0.0 < self.percentile < 100.0:
            raise ValueError(f"percentile must lie in (0, 100), got {self.percentile}")
        if not 1 <= self.min_outlier_freq <= self.n_cells:
            raise ValueError(f"min_outlier_freq must lie in [1, {self.n_cells}], got {self.min_outlier_freq}")
        if self.num_docs < 1:
            raise ValueError("num_docs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    @property
    def n_cells(self) -> int:
        return len(self.cluster_counts) * len(self.pca_dims)

    def cells(self) -> list[tuple[int, int]]:
        return sorted((k, r) for k in self.cluster_counts for r in self.pca_dims)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = str(self.method)
        d["cluster_counts"] = list(self.cluster_counts)
        d["pca_dims"] = list(self.pca_dims)
        d["cell_seeds"] = {f"{k},{r}": cell_seed(self.seed, k, r) for k, r in self.cells()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        d = dict(d)
        d.pop("cell_seeds", None)
        method = d.pop("method", "interaction")
        if isinstance(method, str):
            method = FeatureMethod.parse(method)
        elif isinstance(method, dict):
            method = FeatureMethod(**method)
        weighting = d.pop("weighting", {})
        if isinstance(weighting, dict):
            weighting = WeightingParams(**weighting)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys: {sorted(unknown)}")
        return cls(method=method, weighting=weighting, **d)


def stable_hash(k: int, r: int) -> int:
    digest = hashlib.blake2b(f"{k},{r}".encode(), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def cell_seed(seed: int, k: int, r: int) -> int:
    return seed ^ stable_hash(k, r)


@dataclass
class SweepCell:
    k: int
    r: int
    effective_r: int
    seed: int
    decision: OutlierDecision
    model: GmmModel | None = None
    reduced: np.ndarray | None = None
    failed: str | None = None

    def to_dict(self) -> dict:
        d = {"k": self.k, "r": self.r, "effective_r": self.effective_r, "seed": self.seed}
        d.update(self.decision.to_dict())
        if self.failed:
            d["failed"] = self.failed
        return d


@dataclass
class VoteTally:
    counts: dict[str, int]
    total_cells: int


@dataclass
class FilterResult:
    kept_ids: list[str]
    dropped_ids: list[str]
    original_ids: list[str]
    tally: VoteTally
    per_cell_decisions: list[SweepCell] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kept_ids": self.kept_ids,
            "dropped_ids": self.dropped_ids,
            "original_ids": self.original_ids,
            "tally": {"counts": self.tally.counts, "total_cells": self.tally.total_cells},
            "per_cell_decisions": [c.to_dict() for c in self.per_cell_decisions],
        }

    def write_json(self, path: str | Path, config: SweepConfig | None = None) -> None:
        payload = self.to_dict()
        if config is not None:
            payload["config"] = config.to_dict()
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sweep_features(hits: RetrievedSet, centroid: Centroid, config: SweepConfig) -> FeatureMatrix:
    """Standardized feature matrix that every sweep cell starts from."""
    pairs = compute_distances(hits, centroid)
    raw = build_features(pairs, config.method, config.weighting, hits.ids)
    z, _ = standardize(raw)
    return z


def run_sweep(hits: RetrievedSet, centroid: Centroid, config: SweepConfig) -> list[SweepCell]:
    """Fit one GMM per (K, R) cell and flag low-likelihood documents in each.

    When the feature count F is at most R the PCA step is skipped and the
    standardized features are used directly (effective R = F). Cells come
    back in (K, R) lexicographic order.
    """
    n = len(hits)
    if n < max(config.cluster_counts) + 1:
        raise ValueError(f"{n} documents is too few for K={max(config.cluster_counts)}")
    features = sweep_features(hits, centroid, config)
    f = features.rows.shape[1]
    ids = list(features.doc_ids)

    cells = []
    for k, r in config.cells():
        if f <= r:
            reduced, eff = features.rows, f
        else:
            eff = min(r, n - 1)
            _, reduced = pca_fit_transform(features, eff)
        seed = cell_seed(config.seed, k, r)
        gcfg = GmmConfig(
            k=k,
            max_iterations=config.max_iterations,
            rel_tolerance=config.rel_tolerance,
            covariance_regularizer=config.covariance_regularizer,
            seed=seed,
            restarts=config.restarts,
        )
        try:
            model = gmm_fit(reduced, gcfg)
        except GmmFitError as exc:
            # a degenerate cell abstains instead of aborting the sweep
            log.warning("GMM fit failed for K=%d R=%d: %s", k, r, exc)
            empty = OutlierDecision(np.full(n, np.nan), float("nan"), frozenset(), config.percentile, tuple(ids))
            cells.append(SweepCell(k, r, eff, seed, empty, None, reduced, failed=str(exc)))
            continue
        ll = gmm_log_likelihood(model, reduced)
        decision = detect_outliers(ll, ids, config.percentile)
        cells.append(SweepCell(k, r, eff, seed, decision, model, reduced))
    return cells


def vote_outliers(decisions: Iterable, min_freq: int) -> tuple[VoteTally, set[str]]:
    """Count how many cells flagged each id; keep ids flagged at least ``min_freq`` times.

    ``decisions`` may hold SweepCell objects, ``(K, R, OutlierDecision)``
    tuples or bare OutlierDecision objects.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    total = 0
    for item in decisions:
        if isinstance(item, SweepCell):
            decision = item.decision
        elif isinstance(item, tuple):
            decision = item[-1]
        else:
            decision = item
        total += 1
        ids = decision.outlier_ids if isinstance(decision, OutlierDecision) else decision
        counts.update(set(ids))
    final = {doc_id for doc_id, c in counts.items() if c >= min_freq}
    return VoteTally(dict(sorted(counts.items())), total), final


def filter_context(
    hits: RetrievedSet | Sequence[str],
    final_outliers: Iterable[str],
    tally: VoteTally | None = None,
    cells: Sequence[SweepCell] = (),
) -> FilterResult:
    """Drop voted outliers while keeping retrieval order.

    ``original_ids`` is the top of the retrieval ranking with the same length
    as ``kept_ids``, for the like-for-like baseline prompt.
    """
    ids = hits.ids if isinstance(hits, RetrievedSet) else list(hits)
    outliers = set(final_outliers)
    unknown = outliers - set(ids)
    if unknown:
        raise ValueError(f"outlier ids not in the retrieved set: {sorted(unknown)}")
    kept = [i for i in ids if i not in outliers]
    dropped = [i for i in ids if i in outliers]
    if not kept:
        log.warning("every retrieved document was flagged as an outlier; context is empty")
    tally = tally or VoteTally({i: 1 for i in dropped}, 1)
    return FilterResult(kept, dropped, ids[: len(kept)], tally, list(cells))


def prune_context(hits: RetrievedSet, centroid: Centroid, config: SweepConfig) -> FilterResult:
    """Sweep, vote and filter in one call."""
    cells = run_sweep(hits, centroid, config)
    tally, final = vote_outliers(cells, config.min_outlier_freq)
    return filter_context(hits, final, tally, cells)
