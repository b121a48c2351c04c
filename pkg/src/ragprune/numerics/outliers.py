from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ragprune.numerics.gmm import GmmModel, responsibilities


@dataclass(frozen=True)
class OutlierDecision:
    log_likelihoods: np.ndarray
    threshold: float
    outlier_ids: frozenset[str]
    percentile: float
    doc_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "percentile": self.percentile,
            # retrieval order, not set order, so dumps are stable
            "outlier_ids": [i for i in self.doc_ids if i in self.outlier_ids],
            "log_likelihoods": dict(zip(self.doc_ids, map(float, self.log_likelihoods))),
        }


def percentile_threshold(values, percentile: float) -> float:
    """Linear-interpolation percentile over the N-1 gaps of the sorted values."""
    s = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if s.size == 0:
        raise ValueError("cannot take a percentile of empty input")
    if not 0.0 <= percentile <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {percentile}")
    h = percentile / 100.0 * (s.size - 1)
    lo = math.floor(h)
    if lo >= s.size - 1:
        return float(s[-1])
    return float(s[lo] + (h - lo) * (s[lo + 1] - s[lo]))


def detect_outliers(log_likelihoods, doc_ids: Sequence[str], percentile: float) -> OutlierDecision:
    """Flag documents whose log-likelihood is strictly below the percentile threshold."""
    ll = np.asarray(log_likelihoods, dtype=np.float64).ravel()
    if ll.shape[0] != len(doc_ids):
        raise ValueError(f"{ll.shape[0]} log-likelihoods for {len(doc_ids)} ids")
    threshold = percentile_threshold(ll, percentile)
    flagged = frozenset(doc_id for doc_id, v in zip(doc_ids, ll) if v < threshold)
    return OutlierDecision(ll, threshold, flagged, float(percentile), tuple(doc_ids))


def write_scatter_csv(coords: np.ndarray, labels, decision: OutlierDecision, path: str | Path) -> None:
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError("scatter coordinates must be N x 2")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["doc_id", "pc1", "pc2", "cluster", "is_outlier"])
        for doc_id, (x, y), label in zip(decision.doc_ids, coords, labels):
            is_out = "true" if doc_id in decision.outlier_ids else "false"
            writer.writerow([doc_id, repr(float(x)), repr(float(y)), int(label), is_out])


def emit_scatter_data(reduced, model: GmmModel, decision: OutlierDecision, path: str | Path) -> None:
    """Write the two-component cluster/outlier scatter as CSV.

    ``cluster`` is the component with the highest responsibility.
    """
    reduced = np.asarray(reduced, dtype=np.float64)
    if reduced.ndim != 2 or reduced.shape[1] != 2:
        raise ValueError("reduced data must have exactly 2 columns; project with PCA first")
    labels = np.argmax(responsibilities(model, reduced), axis=1)
    write_scatter_csv(reduced, labels, decision, path)
