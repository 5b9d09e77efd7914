"""Comparison methods: truncated SVD, fine-tuned factor pairs, diagonal (BN) recoloring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError, InputError, OptimizationError
from .linalg import as_matrix, as_vector, least_squares, solve_normal, svd, sym_eig
from .recolor import DIAGONAL, FACTORS, CompressedLayer, coloring, whitening
from .stats import Pca, RunningMoments, truncate_to

METHODS = ("svd", "svd_fta", "fta", "pca_fta", "bn")


@dataclass(frozen=True)
class BaselineSpec:
    method: str
    rank: int = 1
    init_seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown baseline {self.method!r}; expected one of {METHODS}")
        if self.method != "bn" and self.rank < 1:
            raise InputError("factor baselines need rank >= 1")


@dataclass(frozen=True)
class FitConfig:
    """Gradient-descent protocol for the factor baselines.

    The learning rate drops by ``decay`` whenever a trial step fails to lower
    the loss. The regression loss has a different scale than a task loss, so
    these rates are not comparable with network fine-tuning rates.
    """

    step: float = 1e-2
    decay: float = 0.1
    max_iter: int = 2000
    grad_tol: float = 1e-6
    min_step: float = 1e-12


def _check_rank(r, d):
    if not 1 <= r <= d:
        raise DimensionError(f"rank {r} outside [1, {d}]")


def svd_factors(a, r: int):
    """``(U_r sqrt(S_r), sqrt(S_r) V_r^T)``: the best rank-r pair in Frobenius norm."""
    a = as_matrix(a, "a")
    _check_rank(r, min(a.shape))
    dec = svd(a)
    root = np.sqrt(dec.singular_values[:r])
    return dec.u[:, :r] * root, (dec.v[:, :r] * root).T


def random_factors(d: int, r: int, seed: int = 0):
    """I.i.d. Gaussian factors with standard deviation 1/sqrt(d)."""
    _check_rank(r, d)
    rng = np.random.default_rng(seed)
    std = 1.0 / np.sqrt(d)
    return rng.normal(0.0, std, (d, r)), rng.normal(0.0, std, (r, d))


def pca_factors(pca_x: Pca, pca_y: Pca, r: int):
    """Rank-r coloring and whitening factors with no mini-adaptation layer between them."""
    return coloring(truncate_to(pca_y, r)), whitening(truncate_to(pca_x, r))


def _layer(left, right, mu_x, mu_y, method, meta=None):
    d = left.shape[0]
    if mu_x is None or mu_y is None:
        bias = np.zeros(d)
    else:
        bias = as_vector(mu_y, "mu_y", d) - left @ (right @ as_vector(mu_x, "mu_x", d))
    r = left.shape[1]
    layer = CompressedLayer(left, right, bias, r, r, 2 * r * d, FACTORS, method)
    if meta:
        layer.meta.update(meta)
    return layer


def svd_truncate(a, r: int, mu_x=None, mu_y=None) -> CompressedLayer:
    """Truncated SVD layer; with means supplied the bias is ``mu_y - L R mu_x``."""
    left, right = svd_factors(a, r)
    return _layer(left, right, mu_x, mu_y, "svd")


def fit_full_map(samples_x, samples_y, mu_x, mu_y, ridge=0.0) -> np.ndarray:
    """Least-squares d x d map between centered samples (the uncompressed adapter)."""
    x = as_matrix(samples_x, "samples_x")
    y = as_matrix(samples_y, "samples_y")
    if x.shape != y.shape:
        raise DimensionError(f"sample shapes differ: {x.shape} vs {y.shape}")
    return least_squares((x - mu_x).T, (y - mu_y).T, ridge)


def full_map_from_moments(sigma_x, sigma_xy, ridge=0.0) -> np.ndarray:
    """Population regression map ``Sigma_yx Sigma_x^{-1}``."""
    sigma_x = as_matrix(sigma_x, "sigma_x")
    d = sigma_x.shape[0]
    return solve_normal(sigma_x + ridge * np.eye(d), as_matrix(sigma_xy, "sigma_xy"), ridge).T


def sample_moments(samples_x, samples_y, mu_x, mu_y):
    """``(Sigma_x, Sigma_xy, Sigma_y)`` of samples centered at the given means."""
    x = as_matrix(samples_x, "samples_x") - mu_x
    y = as_matrix(samples_y, "samples_y") - mu_y
    if x.shape != y.shape or x.shape[0] < 1:
        raise DimensionError("paired samples need equal shapes and at least one row")
    n = x.shape[0]
    sx = x.T @ x / n
    sy = y.T @ y / n
    return 0.5 * (sx + sx.T), x.T @ y / n, 0.5 * (sy + sy.T)


def fit_factors(samples_x, samples_y, mu_x, mu_y, init, config=FitConfig(), method="fta"):
    """Fine-tune a factor pair ``(L, R)`` on paired samples by gradient descent."""
    sx, sxy, sy = sample_moments(samples_x, samples_y, mu_x, mu_y)
    return fit_factors_moments(sx, sxy, sy, mu_x, mu_y, init, config, method)


def fit_factors_moments(sigma_x, sigma_xy, sigma_y, mu_x, mu_y, init, config=FitConfig(), method="fta"):
    """Minimize ``E||(y - mu_y) - L R (x - mu_x)||^2`` over L and R by gradient descent.

    Descent runs on the loss divided by ``lambda_max(Sigma_x)``, which bounds
    the curvature in the product ``L R`` and makes the fixed initial step
    comparable across input scales. Steps that fail to decrease the loss are
    rejected and the learning rate decays, so the result is never worse than
    ``init``. ``meta`` reports ``converged``, ``iterations`` and the loss
    relative to ``trace(Sigma_y)``.
    """
    left, right = (np.array(f, dtype=np.float64) for f in init)
    d, r = left.shape
    if right.shape != (r, d):
        raise DimensionError(f"init factors {left.shape}, {right.shape} do not chain")
    total = float(np.trace(sigma_y))
    if not total > 0.0:
        raise DegeneracyError("output stream has zero variance")
    scale = float(sym_eig(sigma_x).eigenvalues[0])
    if not scale > 0.0:
        raise DegeneracyError("input stream has zero variance")
    sigma_yx = sigma_xy.T

    def loss(lf, rf):
        with np.errstate(over="ignore", invalid="ignore"):
            b = lf @ rf
            return (total - 2.0 * np.sum(b * sigma_yx) + np.sum((b @ sigma_x) * b)) / scale

    def grads(lf, rf):
        g = 2.0 * (lf @ rf @ sigma_x - sigma_yx) / scale
        return g @ rf.T, lf.T @ g

    current = loss(left, right)
    initial = current
    if not np.isfinite(current):
        raise OptimizationError("loss is non-finite at initialization", 0)
    lr = config.step
    gl, gr = grads(left, right)
    converged = bool(np.sqrt(np.sum(gl * gl) + np.sum(gr * gr)) < config.grad_tol)
    it = 0
    while it < config.max_iter and not converged and lr >= config.min_step:
        it += 1
        tl, tr = left - lr * gl, right - lr * gr
        value = loss(tl, tr)
        if not np.isfinite(value):
            raise OptimizationError(f"factor fit diverged at iteration {it}", it)
        if value < current:
            left, right, current = tl, tr, value
            gl, gr = grads(left, right)
            converged = bool(np.sqrt(np.sum(gl * gl) + np.sum(gr * gr)) < config.grad_tol)
        else:
            lr *= config.decay
    meta = dict(
        converged=converged,
        iterations=it,
        initial_loss=float(initial * scale / total),
        final_loss=float(current * scale / total),
        final_step=lr,
    )
    return _layer(left, right, mu_x, mu_y, method, meta)


def _marginals(stats):
    if isinstance(stats, RunningMoments):
        return stats.mean, np.diag(stats.covariance()).copy()
    if isinstance(stats, Pca):
        return stats.mean, np.diag(stats.covariance()).copy()
    raise TypeError(f"expected Pca or RunningMoments, got {type(stats).__name__}")


def bn_recolor(stats_x, stats_y) -> CompressedLayer:
    """Per-coordinate map ``sqrt(v_y / v_x) (x - mu_x) + mu_y`` from marginal variances.

    Stored as a diagonal left factor and identity right factor; counts 2d
    parameters (scale and shift), reported as 0 under the adapter-relative
    convention in ``meta``.
    """
    mu_x, vx = _marginals(stats_x)
    mu_y, vy = _marginals(stats_y)
    if mu_x.shape != mu_y.shape:
        raise DimensionError("input and output dimensions differ")
    bad = np.flatnonzero(vx <= 0.0)
    if bad.size:
        raise DegeneracyError(f"input coordinate {bad[0]} has zero variance")
    scale = np.sqrt(np.maximum(vy, 0.0) / vx)
    d = scale.size
    layer = CompressedLayer(np.diag(scale), np.eye(d), mu_y - scale * mu_x, d, d, 2 * d, DIAGONAL, "bn")
    layer.meta.update(param_count_relative=0)
    return layer
