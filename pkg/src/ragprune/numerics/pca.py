from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # R x F, orthonormal rows
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def pca_fit_transform(features, target_dim: int) -> tuple[PcaModel, np.ndarray]:
    """Project ``features`` (N x F array or FeatureMatrix) onto its top principal axes.

    Uses the eigendecomposition of the population covariance. Each axis is
    sign-fixed so that its largest-magnitude entry is positive.
    """
    x = np.asarray(getattr(features, "rows", features), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array")
    n, f = x.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= target_dim <= min(n - 1, f):
        raise ValueError(f"target_dim must lie in [1, {min(n - 1, f)}], got {target_dim}")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:target_dim]
    components = eigvecs[:, order].T.copy()
    # rank-deficient input can give eigenvalues like -1e-17
    variances = np.clip(eigvals[order], 0.0, None)

    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    model = PcaModel(mean, components, variances)
    return model, centered @ components.T
