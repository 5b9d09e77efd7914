"""Activation statistics: streaming moments, PCAs, truncation and joint merging.

Covariances use the population convention (scatter / n). Pooling PCAs with
weights N_i / N is exact only under that convention.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError, InputError, InsufficientDataError
from .linalg import as_matrix, as_vector, psd_eig

DEFAULT_THRESHOLD = 0.99


@dataclass(frozen=True)
class RunningMoments:
    """Sample count, mean and scatter (sum of centered outer products) of one stream."""

    n: int
    mean: np.ndarray
    scatter: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "RunningMoments":
        return cls(0, np.zeros(d), np.zeros((d, d)))

    @classmethod
    def from_samples(cls, samples) -> "RunningMoments":
        samples = as_matrix(samples, "samples")
        return accumulate(cls.empty(samples.shape[1]), samples)

    @classmethod
    def from_moments(cls, mean, covariance, n: int) -> "RunningMoments":
        """Exact population moments, bypassing sampling noise."""
        mean = as_vector(mean, "mean")
        cov = as_matrix(covariance, "covariance")
        if cov.shape != (mean.size, mean.size):
            raise DimensionError("covariance shape does not match mean")
        return cls(int(n), mean, 0.5 * (cov + cov.T) * n)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def covariance(self) -> np.ndarray:
        if self.n < 1:
            raise InsufficientDataError("covariance of an empty stream")
        return self.scatter / self.n


def _pool(n_a, mean_a, scatter_a, n_b, mean_b, scatter_b):
    # Chan et al. pairwise update; exact for any split.
    n = n_a + n_b
    delta = mean_b - mean_a
    mean = mean_a + delta * (n_b / n)
    scatter = scatter_a + scatter_b + np.outer(delta, delta) * (n_a * n_b / n)
    return n, mean, 0.5 * (scatter + scatter.T)


def accumulate(state: RunningMoments, batch) -> RunningMoments:
    """Fold a batch (rows are observations) into ``state``; returns a new value."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != state.dim:
        raise DimensionError(f"batch shape {batch.shape} does not match dimension {state.dim}")
    if batch.shape[0] < 1:
        raise DimensionError("batch must contain at least one row")
    if not np.all(np.isfinite(batch)):
        raise InputError("batch contains non-finite entries")
    n_b = batch.shape[0]
    mean_b = batch.mean(axis=0)
    centered = batch - mean_b
    scatter_b = centered.T @ centered
    if state.n == 0:
        return RunningMoments(n_b, mean_b, 0.5 * (scatter_b + scatter_b.T))
    return RunningMoments(*_pool(state.n, state.mean, state.scatter, n_b, mean_b, scatter_b))


def combine(parts: list[RunningMoments]) -> RunningMoments:
    """Moments-level merge using the same pooling algebra as ``merge``."""
    if not parts:
        raise DimensionError("combine needs at least one part")
    out = parts[0]
    for part in parts[1:]:
        if part.dim != out.dim:
            raise DimensionError("moment dimensions differ")
        if part.n == 0:
            continue
        if out.n == 0:
            out = part
            continue
        out = RunningMoments(*_pool(out.n, out.mean, out.scatter, part.n, part.mean, part.scatter))
    return out


@dataclass(frozen=True)
class Pca:
    """Mean, descending eigenvalues and orthonormal components (column i pairs with eigenvalue i)."""

    mean: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    n: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def covariance(self) -> np.ndarray:
        cov = (self.components * self.eigenvalues) @ self.components.T
        return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class TruncatedPca:
    mean: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    k: int
    threshold_used: float

    def __post_init__(self):
        if not 1 <= self.k <= self.components.shape[0]:
            raise DimensionError(f"retained dimension {self.k} out of range")
        if self.components.shape != (self.mean.size, self.k) or self.eigenvalues.size != self.k:
            raise DimensionError("truncated PCA fields have inconsistent shapes")
        if np.any(self.eigenvalues <= 0.0):
            raise DegeneracyError("truncated PCA retains a non-positive eigenvalue")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def pca_from_covariance(mean, covariance, n: int) -> Pca:
    eig = psd_eig(covariance)
    return Pca(np.asarray(mean, dtype=np.float64), eig.eigenvalues, eig.eigenvectors, int(n))


def pca(state: RunningMoments) -> Pca:
    if state.n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 samples, got {state.n}")
    return pca_from_covariance(state.mean, state.covariance(), state.n)


def explained_variance(eigenvalues) -> np.ndarray:
    """Cumulative fraction r_i of eigenvalue mass captured by the first i components."""
    e = np.maximum(np.asarray(eigenvalues, dtype=np.float64), 0.0)
    total = e.sum()
    if not total > 0.0:
        raise DegeneracyError("distribution has zero total variance")
    return np.cumsum(e) / total


def retained_dimension(eigenvalues, threshold: float) -> int:
    """Smallest i with r_i > threshold, never counting zero eigenvalues."""
    if not 0.0 < threshold <= 1.0:
        raise InputError(f"threshold must lie in (0, 1], got {threshold}")
    r = explained_variance(eigenvalues)
    positive = int(np.count_nonzero(np.asarray(eigenvalues) > 0.0))
    hits = np.flatnonzero(r > threshold)
    k = int(hits[0]) + 1 if hits.size else r.size
    return max(1, min(k, positive))


def truncate(p: Pca, threshold: float = DEFAULT_THRESHOLD) -> TruncatedPca:
    k = retained_dimension(p.eigenvalues, threshold)
    return truncate_to(p, k, threshold_used=threshold)


def truncate_to(p: Pca, k: int, threshold_used: float | None = None) -> TruncatedPca:
    """Keep exactly the leading ``k`` components (fixed-budget comparisons)."""
    if not 1 <= k <= p.dim:
        raise DimensionError(f"cannot keep {k} of {p.dim} components")
    if p.eigenvalues[k - 1] <= 0.0:
        raise DegeneracyError(f"component {k - 1} has zero variance")
    if threshold_used is None:
        threshold_used = float(explained_variance(p.eigenvalues)[k - 1])
    return TruncatedPca(
        p.mean.copy(),
        p.eigenvalues[:k].copy(),
        p.components[:, :k].copy(),
        k,
        float(threshold_used),
    )


def merge(parts: list[Pca]) -> Pca:
    """PCA of the pooled data from per-dataset PCAs.

    Equivalent to ``sum_i (N_i/N)(P_i E_i P_i^T + mu_i mu_i^T) - mu mu^T``,
    evaluated in the centered form ``sum_i (N_i/N)(Sigma_i + delta_i delta_i^T)``
    with ``delta_i = mu_i - mu`` to avoid cancellation when means are large.
    """
    if not parts:
        raise DimensionError("merge needs at least one PCA")
    d = parts[0].dim
    for part in parts:
        if part.dim != d:
            raise DimensionError(f"PCA dimensions differ: {part.dim} vs {d}")
        if part.n < 1:
            raise InsufficientDataError("every merged PCA needs n >= 1")
    if len(parts) == 1:
        return parts[0]
    counts = np.array([part.n for part in parts], dtype=np.float64)
    total = counts.sum()
    weights = counts / total
    mean = sum(w * part.mean for w, part in zip(weights, parts))
    cov = np.zeros((d, d))
    for w, part in zip(weights, parts):
        delta = part.mean - mean
        cov += w * (part.covariance() + np.outer(delta, delta))
    return pca_from_covariance(mean, 0.5 * (cov + cov.T), int(total))
