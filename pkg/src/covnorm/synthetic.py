"""Synthetic linear instances ``y = A x`` with Gaussian x and exact population moments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stats import Pca, RunningMoments, pca_from_covariance

POPULATION_N = 1_000_000


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    return q * np.where(np.diag(r) < 0.0, -1.0, 1.0)


@dataclass(frozen=True)
class LinearInstance:
    a: np.ndarray
    mu_x: np.ndarray
    sigma_x: np.ndarray

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def mu_y(self) -> np.ndarray:
        return self.a @ self.mu_x

    @property
    def sigma_y(self) -> np.ndarray:
        s = self.a @ self.sigma_x @ self.a.T
        return 0.5 * (s + s.T)

    @property
    def sigma_xy(self) -> np.ndarray:
        """``E[(x - mu_x)(y - mu_y)^T] = Sigma_x A^T``."""
        return self.sigma_x @ self.a.T

    def pca_x(self, n: int = POPULATION_N) -> Pca:
        return pca_from_covariance(self.mu_x, self.sigma_x, n)

    def pca_y(self, n: int = POPULATION_N) -> Pca:
        return pca_from_covariance(self.mu_y, self.sigma_y, n)

    def moments_x(self, n: int = POPULATION_N) -> RunningMoments:
        return RunningMoments.from_moments(self.mu_x, self.sigma_x, n)

    def moments_y(self, n: int = POPULATION_N) -> RunningMoments:
        return RunningMoments.from_moments(self.mu_y, self.sigma_y, n)

    def sample(self, n: int, rng: np.random.Generator):
        """``n`` paired rows ``(X, Y)`` with ``Y = X A^T``."""
        x = rng.multivariate_normal(self.mu_x, self.sigma_x, size=n, method="eigh")
        return x, x @ self.a.T


def random_instance(d: int, seed: int, max_cond: float = 100.0, mean_scale: float = 1.0) -> LinearInstance:
    """Nonsingular A (singular values in [0.5, 2]) and Sigma_x with condition number <= max_cond."""
    rng = np.random.default_rng(seed)
    a = random_orthogonal(d, rng) @ np.diag(rng.uniform(0.5, 2.0, d)) @ random_orthogonal(d, rng).T
    e = 10.0 ** rng.uniform(0.0, np.log10(max_cond), d)
    q = random_orthogonal(d, rng)
    sigma = (q * e) @ q.T
    return LinearInstance(a, mean_scale * rng.normal(size=d), 0.5 * (sigma + sigma.T))


def anisotropic_instance(d: int = 6, seed: int = 0) -> LinearInstance:
    """Input variances ``100 * 0.01**i`` and A amplifying the low-variance inputs.

    A has singular value ``10**(i/4)`` along input component i, so its largest
    singular directions see almost no data while the output variance
    ``100 * 10**(-1.5 i)`` stays concentrated in the leading components.
    """
    rng = np.random.default_rng(seed)
    i = np.arange(d)
    px = random_orthogonal(d, rng)
    py = random_orthogonal(d, rng)
    e = 100.0 * 0.01 ** i
    s = 10.0 ** (i / 4.0)
    sigma = (px * e) @ px.T
    a = (py * s) @ px.T
    return LinearInstance(a, np.zeros(d), 0.5 * (sigma + sigma.T))


def correlated_instance(d: int = 8, rho: float = 0.9, seed: int = 0) -> LinearInstance:
    """Equicorrelated input (off-diagonal correlation ``rho``) through a non-diagonal A."""
    rng = np.random.default_rng(seed)
    sd = rng.uniform(0.5, 2.0, d)
    corr = np.full((d, d), rho) + (1.0 - rho) * np.eye(d)
    sigma = corr * np.outer(sd, sd)
    a = random_orthogonal(d, rng) @ np.diag(rng.uniform(0.5, 2.0, d))
    return LinearInstance(a, rng.normal(size=d), 0.5 * (sigma + sigma.T))


def diagonal_instance(d: int = 8, seed: int = 0) -> LinearInstance:
    """Independent coordinates with positive diagonal A.

    Input and output variances both decrease with the coordinate index, so the
    sorted PCA components pair coordinate i with coordinate i.
    """
    rng = np.random.default_rng(seed)
    vx = np.sort(rng.uniform(1.0, 10.0, d))[::-1]
    gains = np.sort(rng.uniform(0.5, 2.0, d))[::-1]
    return LinearInstance(np.diag(gains), rng.normal(size=d), np.diag(vx))


def gradual_instance(d: int = 16, decay: float = 0.7, seed: int = 0) -> LinearInstance:
    """Geometrically decaying input spectrum and a random nonsingular A."""
    rng = np.random.default_rng(seed)
    q = random_orthogonal(d, rng)
    sigma = (q * decay ** np.arange(d)) @ q.T
    a = random_orthogonal(d, rng) @ np.diag(rng.uniform(0.5, 2.0, d)) @ random_orthogonal(d, rng).T
    return LinearInstance(a, rng.normal(size=d), 0.5 * (sigma + sigma.T))
