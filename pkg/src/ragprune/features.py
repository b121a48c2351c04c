"""Distance features for retrieved documents.

Each retrieved document gets two Euclidean distances, one to the centroid of
the retrieved set and one to the query vector. Those are combined into a
feature row by one of four methods and then standardized column-wise.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ragprune.vector_store import Centroid, RetrievedSet

log = logging.getLogger(__name__)

METHODS = ("concatenate", "weighted_sum", "interaction", "polynomial")
WEIGHTING_MODES = ("all_methods", "none")


@dataclass(frozen=True)
class DistancePair:
    d_centroid: float
    d_query: float

    def __post_init__(self):
        if not (np.isfinite(self.d_centroid) and np.isfinite(self.d_query)):
            raise ValueError("distances must be finite")
        if self.d_centroid < 0 or self.d_query < 0:
            raise ValueError("distances must be non-negative")


@dataclass(frozen=True)
class FeatureMethod:
    name: str
    degree: int = 2

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown feature method {self.name!r}; expected one of {METHODS}")
        if self.degree < 1:
            raise ValueError("polynomial degree must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "FeatureMethod":
        """Parse ``interaction``, ``polynomial`` or ``polynomial:3``."""
        name, _, degree = text.partition(":")
        if degree:
            if name != "polynomial":
                raise ValueError(f"only polynomial takes a degree, got {text!r}")
            return cls(name, int(degree))
        return cls(name)

    @property
    def n_features(self) -> int:
        if self.name == "weighted_sum":
            return 1
        if self.name == "concatenate":
            return 2
        if self.name == "interaction":
            return 4
        return (self.degree + 1) * (self.degree + 2) // 2 - 1

    def __str__(self) -> str:
        return f"polynomial:{self.degree}" if self.name == "polynomial" else self.name


@dataclass(frozen=True)
class WeightingParams:
    alpha: float = 0.5
    epsilon: float = 1e-8
    # "all_methods": concatenate/interaction/polynomial consume the weighted pair.
    applies_to: str = "all_methods"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.applies_to not in WEIGHTING_MODES:
            raise ValueError(f"applies_to must be one of {WEIGHTING_MODES}")


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    method: FeatureMethod
    doc_ids: tuple[str, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != len(self.doc_ids):
            raise ValueError("rows must be N x F and aligned with doc_ids")
        if not np.all(np.isfinite(rows)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray  # bool mask of constant columns

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def compute_distances(hits: RetrievedSet, centroid: Centroid) -> list[DistancePair]:
    vectors = hits.vectors
    c = np.asarray(centroid.vector, dtype=np.float64)
    q = np.asarray(hits.query_vector, dtype=np.float64)
    if c.shape != (vectors.shape[1],) or q.shape != (vectors.shape[1],):
        raise ValueError("centroid/query dimension does not match retrieved vectors")
    d_c = np.linalg.norm(vectors - c, axis=1)
    d_q = np.linalg.norm(vectors - q, axis=1)
    return [DistancePair(float(a), float(b)) for a, b in zip(d_c, d_q)]


def apply_weighting(pairs: Sequence[DistancePair], params: WeightingParams) -> list[DistancePair]:
    a = params.alpha
    return [DistancePair(p.d_centroid * (1.0 - a), p.d_query * a) for p in pairs]


def _polynomial(d_c: np.ndarray, d_q: np.ndarray, degree: int) -> np.ndarray:
    # total degree ascending, then descending power of d_c; no bias column
    cols = []
    for total in range(1, degree + 1):
        for a in range(total, -1, -1):
            cols.append(d_c**a * d_q ** (total - a))
    return np.column_stack(cols)


def build_features(
    pairs: Sequence[DistancePair],
    method: FeatureMethod,
    params: WeightingParams,
    doc_ids: Sequence[str] | None = None,
) -> FeatureMatrix:
    """Assemble one feature row per document from its raw distance pair.

    ``weighted_sum`` always works on the raw distances since alpha is part of
    its formula; the other methods use the alpha-weighted pair unless
    ``params.applies_to == "none"``.
    """
    if not pairs:
        raise ValueError("need at least one distance pair")
    if doc_ids is None:
        doc_ids = [str(i) for i in range(len(pairs))]
    if len(doc_ids) != len(pairs):
        raise ValueError("doc_ids must align with pairs")

    if method.name == "weighted_sum":
        d_c = np.array([p.d_centroid for p in pairs])
        d_q = np.array([p.d_query for p in pairs])
        a = params.alpha
        rows = (a * d_q + (1.0 - a) * d_c)[:, None]
        return FeatureMatrix(rows, method, tuple(doc_ids))

    used = apply_weighting(pairs, params) if params.applies_to == "all_methods" else list(pairs)
    d_c = np.array([p.d_centroid for p in used])
    d_q = np.array([p.d_query for p in used])
    if method.name == "concatenate":
        rows = np.column_stack([d_c, d_q])
    elif method.name == "interaction":
        rows = np.column_stack([d_c, d_q, d_c * d_q, d_c / (d_q + params.epsilon)])
    else:
        rows = _polynomial(d_c, d_q, method.degree)
    return FeatureMatrix(rows, method, tuple(doc_ids))


def standardize(features: FeatureMatrix) -> tuple[FeatureMatrix, StandardizationStats]:
    """Scale each column to zero mean and unit population variance.

    Constant columns become all zeros and are flagged in the returned stats.
    """
    x = features.rows
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least two rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    zero = std == 0
    if np.any(zero):
        log.warning("zero-variance feature columns: %s", np.flatnonzero(zero).tolist())
    z = np.where(zero, 0.0, (x - mean) / np.where(zero, 1.0, std))
    return FeatureMatrix(z, features.method, features.doc_ids), StandardizationStats(mean, std, zero)


def write_features_csv(features: FeatureMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id"] + [f"f{j + 1}" for j in range(features.rows.shape[1])])
        for doc_id, row in zip(features.doc_ids, features.rows):
            writer.writerow([doc_id] + [repr(float(v)) for v in row])
