"""Full-covariance Gaussian mixture fitted by expectation-maximization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


class GmmFitError(RuntimeError):
    """EM could not produce a usable model even after extra regularization."""


@dataclass(frozen=True)
class GmmConfig:
    k: int
    max_iterations: int = 200
    rel_tolerance: float = 1e-6
    covariance_regularizer: float = 1e-6
    seed: int = 0
    restarts: int = 1
    kmeans_iterations: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be >= 1")
        if not (self.rel_tolerance > 0 and self.covariance_regularizer > 0):
            raise ValueError("tolerances must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass
class GmmModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    converged: bool = False
    final_log_likelihood: float = float("nan")
    n_iterations: int = 0
    # total log-likelihood after each EM iteration
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": [c.ravel().tolist() for c in self.covariances],
            "converged": self.converged,
            "final_log_likelihood": self.final_log_likelihood,
            "n_iterations": self.n_iterations,
        }


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    return np.squeeze(out, axis=axis)


def _as_data(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("data must be N x R")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    return x


def _cholesky_all(covariances: np.ndarray) -> np.ndarray:
    return np.stack([np.linalg.cholesky(c) for c in covariances])


def _component_log_densities(x: np.ndarray, means: np.ndarray, chols: np.ndarray) -> np.ndarray:
    n, r = x.shape
    out = np.empty((n, means.shape[0]))
    for k, (mu, chol) in enumerate(zip(means, chols)):
        z = solve_triangular(chol, (x - mu).T, lower=True)
        maha = np.sum(z * z, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        out[:, k] = -0.5 * (r * LOG_2PI + log_det + maha)
    return out


def gmm_log_likelihood(model: GmmModel, data) -> np.ndarray:
    """Per-point mixture log-density, log sum_k w_k N(x | mu_k, S_k)."""
    x = _as_data(data)
    if x.shape[1] != model.dim:
        raise ValueError(f"data has {x.shape[1]} columns, model expects {model.dim}")
    chols = _cholesky_all(model.covariances)
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return logsumexp(_component_log_densities(x, model.means, chols) + log_w, axis=1)


def responsibilities(model: GmmModel, data) -> np.ndarray:
    x = _as_data(data)
    chols = _cholesky_all(model.covariances)
    with np.errstate(divide="ignore"):
        weighted = _component_log_densities(x, model.means, chols) + np.log(model.weights)
    return np.exp(weighted - logsumexp(weighted, axis=1)[:, None])


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = x[idx]
        closest = np.minimum(closest, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _kmeans_labels(x: np.ndarray, centers: np.ndarray, iterations: int) -> np.ndarray:
    labels = None
    for _ in range(iterations):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centers.shape[0]):
            members = x[labels == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return labels


def _expected_cost(cov: np.ndarray, scatter: np.ndarray) -> float:
    # -2/N_k times a component's expected complete-data log-likelihood, up to constants
    chol = np.linalg.cholesky(cov)
    return 2.0 * float(np.sum(np.log(np.diag(chol)))) + float(np.trace(np.linalg.solve(cov, scatter)))


def _m_step(x: np.ndarray, resp: np.ndarray, reg: float, prev_covs: np.ndarray | None):
    """Weights and means are the usual closed form. Each covariance is the
    weighted scatter plus ``reg`` on the diagonal, unless the previous
    covariance scores better under the current responsibilities; keeping it
    makes this a generalized EM step, so the likelihood cannot decrease.
    """
    n, r = x.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
    weights = nk / n
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((resp.shape[1], r, r))
    for k in range(resp.shape[1]):
        diff = x - means[k]
        scatter = (resp[:, k] * diff.T) @ diff / nk[k]
        scatter = 0.5 * (scatter + scatter.T)
        cand = scatter.copy()
        cand.flat[:: r + 1] += reg
        if prev_covs is not None:
            try:
                if _expected_cost(prev_covs[k], scatter) < _expected_cost(cand, scatter):
                    cand = prev_covs[k]
            except np.linalg.LinAlgError:
                pass
        covs[k] = cand
    return weights / weights.sum(), means, covs


def _fit_once(x: np.ndarray, config: GmmConfig, rng: np.random.Generator) -> GmmModel:
    n = x.shape[0]
    centers = kmeans_plusplus(x, config.k, rng)
    labels = _kmeans_labels(x, centers, config.kmeans_iterations)
    resp = np.zeros((n, config.k))
    resp[np.arange(n), labels] = 1.0

    reg = config.covariance_regularizer
    history: list[float] = []
    converged = False
    prev = -np.inf
    covs = None
    for _ in range(config.max_iterations):
        for _ in range(8):
            weights, means, new_covs = _m_step(x, resp, reg, covs)
            try:
                chols = _cholesky_all(new_covs)
                covs = new_covs
                break
            except np.linalg.LinAlgError:
                reg *= 10.0
                log.debug("covariance not positive definite; regularizer raised to %g", reg)
        else:
            raise GmmFitError(f"covariances stayed singular up to regularizer {reg:g}")

        weighted = _component_log_densities(x, means, chols) + np.log(weights)
        per_point = logsumexp(weighted, axis=1)
        total = float(per_point.sum())
        if not math.isfinite(total):
            raise GmmFitError("log-likelihood became non-finite")
        resp = np.exp(weighted - per_point[:, None])
        history.append(total)
        if total - prev < config.rel_tolerance * abs(total):
            converged = True
            break
        prev = total

    return GmmModel(weights, means, covs, converged, history[-1], len(history), history)


def gmm_fit(data, config: GmmConfig) -> GmmModel:
    """Fit a K-component full-covariance mixture by EM.

    Starts from k-means++ seeding refined by Lloyd iterations. With
    ``restarts > 1`` the run with the highest final log-likelihood wins.
    Raises GmmFitError if the fit degenerates beyond repair.
    """
    x = _as_data(data)
    if x.shape[0] < config.k:
        raise ValueError(f"need at least k={config.k} points, got {x.shape[0]}")
    rng = np.random.default_rng(config.seed)
    best = None
    for _ in range(config.restarts):
        model = _fit_once(x, config, rng)
        if best is None or model.final_log_likelihood > best.final_log_likelihood:
            best = model
    return best


def n_free_parameters(k: int, r: int) -> int:
    return k - 1 + k * r + k * r * (r + 1) // 2


def gmm_select_k(data, candidates, criterion: str = "BIC", config: GmmConfig | None = None):
    """Pick the component count minimizing BIC or AIC.

    Returns ``(best_k, scores)`` where ``scores`` maps each candidate to
    ``{"log_likelihood", "n_params", "bic", "aic"}``. Ties go to the smaller K.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("empty candidate list")
    criterion = criterion.upper()
    if criterion not in ("BIC", "AIC"):
        raise ValueError("criterion must be BIC or AIC")
    x = _as_data(data)
    n, r = x.shape
    base = config or GmmConfig(k=1)
    scores = {}
    for k in sorted(set(candidates)):
        if k > n:
            raise ValueError(f"candidate k={k} exceeds number of points {n}")
        model = gmm_fit(x, GmmConfig(**{**base.__dict__, "k": k}))
        total = float(gmm_log_likelihood(model, x).sum())
        p = n_free_parameters(k, r)
        scores[k] = {
            "log_likelihood": total,
            "n_params": p,
            "bic": p * math.log(n) - 2.0 * total,
            "aic": 2.0 * p - 2.0 * total,
        }
    key = criterion.lower()
    best = min(scores, key=lambda k: (scores[k][key], k))
    return best, scores
