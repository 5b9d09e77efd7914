"""Covariance normalization: whitening, mini-adaptation, coloring, absorption.

Orientation: samples are rows. A column vector x maps to

    y = C @ M @ W @ (x - mu_x) + mu_y

with W (kx x d), M (ky x kx) and C (d x ky). The mini-adaptation matrix is
stored ky x kx so the chain composes left to right as written.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, DimensionError, InputError, OptimizationError
from .linalg import as_matrix, as_vector, pinv_scaled_orthogonal, solve_normal
from .stats import DEFAULT_THRESHOLD, Pca, RunningMoments, TruncatedPca, pca, truncate, truncate_to

EIG_FLOOR = 1e-12
RIDGE_SCALE = 1e-6

# Layer file side flag: where the mini-adaptation matrix went, or what kind of layer it is.
ABSORB_WHITENING = 0
ABSORB_COLORING = 1
FACTORS = 2
DIAGONAL = 3


def _check_floor(p: TruncatedPca):
    e = p.eigenvalues
    floor = EIG_FLOOR * float(np.max(e))
    bad = np.flatnonzero(e <= floor)
    if bad.size:
        raise DegeneracyError(
            f"eigenvalue {bad[0]} ({e[bad[0]]:.3e}) is below the floor {floor:.3e}"
        )


def whitening(p: TruncatedPca) -> np.ndarray:
    """``diag(1/sqrt(e)) @ P.T`` (kx x d)."""
    _check_floor(p)
    return p.components.T / np.sqrt(p.eigenvalues)[:, None]


def coloring(p: TruncatedPca) -> np.ndarray:
    """``P @ diag(sqrt(e))`` (d x ky)."""
    _check_floor(p)
    return p.components * np.sqrt(p.eigenvalues)


def default_ridge(normal_trace: float, kx: int) -> float:
    return RIDGE_SCALE * normal_trace / kx


def _chain_shapes(w, c):
    if w.shape[1] != c.shape[0]:
        raise DimensionError(f"whitening {w.shape} and coloring {c.shape} disagree on d")


def fit_mini_adaptation(w, c, samples_x, samples_y, mu_x, mu_y, ridge=None) -> np.ndarray:
    """Least-squares M between fixed whitening and coloring factors, from paired samples.

    Minimizes ``||(Y - mu_y) - C M W (X - mu_x)||_F^2 + ridge ||M||_F^2``. Because C
    has orthogonal columns, regressing ``pinv(C) (Y - mu_y)`` on ``W (X - mu_x)``
    gives the exact minimizer.
    """
    w, c = as_matrix(w, "whitening"), as_matrix(c, "coloring")
    _chain_shapes(w, c)
    x = as_matrix(samples_x, "samples_x")
    y = as_matrix(samples_y, "samples_y")
    d = w.shape[1]
    if x.shape != y.shape or x.shape[1] != d:
        raise DimensionError(f"sample shapes {x.shape}, {y.shape} do not match d={d}")
    z = w @ (x - as_vector(mu_x, "mu_x", d)).T
    targets = pinv_scaled_orthogonal(c) @ (y - as_vector(mu_y, "mu_y", d)).T
    normal = z @ z.T
    if ridge is None:
        ridge = default_ridge(float(np.trace(normal)), w.shape[0])
    _check_ridge(ridge)
    return solve_normal(normal + ridge * np.eye(w.shape[0]), z @ targets.T, ridge).T


def fit_mini_adaptation_moments(w, c, sigma_x, sigma_xy, ridge=None) -> np.ndarray:
    """Population version of ``fit_mini_adaptation``.

    ``sigma_xy`` is the cross-covariance ``E[(x - mu_x)(y - mu_y)^T]`` (d x d).
    The ridge is per sample here, so the default scales with ``trace(W Sigma_x W^T)``.
    """
    w, c = as_matrix(w, "whitening"), as_matrix(c, "coloring")
    _chain_shapes(w, c)
    sigma_x = as_matrix(sigma_x, "sigma_x")
    sigma_xy = as_matrix(sigma_xy, "sigma_xy")
    d = w.shape[1]
    if sigma_x.shape != (d, d) or sigma_xy.shape != (d, d):
        raise DimensionError("moment shapes do not match d")
    normal = w @ sigma_x @ w.T
    rhs = w @ sigma_xy @ pinv_scaled_orthogonal(c).T
    if ridge is None:
        ridge = default_ridge(float(np.trace(normal)), w.shape[0])
    _check_ridge(ridge)
    return solve_normal(normal + ridge * np.eye(w.shape[0]), rhs, ridge).T


def _check_ridge(ridge):
    if not np.isfinite(ridge) or ridge < 0.0:
        raise InputError(f"ridge must be a nonnegative finite number, got {ridge}")


def refine_mini_adaptation(
    m, w, c, sigma_x, sigma_xy, sigma_y, ridge=0.0, step=1e-2, max_steps=500, tol=1e-9
):
    """Gradient descent on the same objective as the least-squares fit.

    The loss is divided by ``trace(sigma_y)`` so the fixed step is scale free.
    Stops early when the relative improvement of a step drops below ``tol``.
    Returns ``(m, steps_taken)``.
    """
    m = np.array(m, dtype=np.float64)
    scale = float(np.trace(sigma_y))
    if not scale > 0.0:
        raise DegeneracyError("output stream has zero variance")
    wsw = w @ sigma_x @ w.T
    cross = c.T @ sigma_xy.T @ w.T  # C^T Sigma_yx W^T
    ctc = c.T @ c

    def loss(mm):
        b = c @ mm @ w
        val = scale - 2.0 * np.trace(b @ sigma_xy) + np.trace(b @ sigma_x @ b.T)
        return (val + ridge * np.sum(mm * mm)) / scale

    current = loss(m)
    for it in range(max_steps):
        grad = 2.0 * (ctc @ m @ wsw - cross + ridge * m) / scale
        trial = m - step * grad
        value = loss(trial)
        if not np.isfinite(value):
            raise OptimizationError(f"mini-adaptation refinement diverged at step {it}", it)
        improvement = current - value
        m, previous, current = trial, current, value
        if abs(improvement) <= tol * max(abs(previous), np.finfo(float).tiny):
            return m, it + 1
    return m, max_steps


@dataclass(frozen=True)
class RecolorTransform:
    w: np.ndarray
    m: np.ndarray
    c: np.ndarray
    mu_x: np.ndarray
    mu_y: np.ndarray

    @property
    def kx(self) -> int:
        return self.w.shape[0]

    @property
    def ky(self) -> int:
        return self.c.shape[1]

    def matrix(self) -> np.ndarray:
        return self.c @ self.m @ self.w

    def apply(self, x) -> np.ndarray:
        """Map a vector or a batch of row vectors, evaluating the three stages in turn."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.c @ (self.m @ (self.w @ (x - self.mu_x))) + self.mu_y
        return ((x - self.mu_x) @ self.w.T @ self.m.T) @ self.c.T + self.mu_y


def assemble(w, m, c, mu_x, mu_y) -> RecolorTransform:
    w, m, c = as_matrix(w, "whitening"), as_matrix(m, "mini-adaptation"), as_matrix(c, "coloring")
    d = w.shape[1]
    if c.shape[0] != d or m.shape != (c.shape[1], w.shape[0]):
        raise DimensionError(f"cannot chain C {c.shape}, M {m.shape}, W {w.shape}")
    return RecolorTransform(w, m, c, as_vector(mu_x, "mu_x", d), as_vector(mu_y, "mu_y", d))


@dataclass(frozen=True)
class CompressedLayer:
    """``apply(x) = left @ right @ x + bias``; the bias is not counted in ``param_count``."""

    left: np.ndarray
    right: np.ndarray
    bias: np.ndarray
    kx: int
    ky: int
    param_count: int
    side: int = FACTORS
    method: str = "covnorm"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d = self.bias.shape[0]
        if self.left.shape[0] != d or self.right.shape[1] != d:
            raise DimensionError("layer factors do not produce a d x d map")
        if self.left.shape[1] != self.right.shape[0]:
            raise DimensionError("layer factors do not chain")
        if self.param_count != expected_param_count(self.side, d, self.left, self.right):
            raise DimensionError("param_count disagrees with the factor shapes")

    @property
    def dim(self) -> int:
        return self.bias.shape[0]

    @property
    def rank(self) -> int:
        return self.left.shape[1]

    def matrix(self) -> np.ndarray:
        return self.left @ self.right

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.left @ (self.right @ x) + self.bias
        return (x @ self.right.T) @ self.left.T + self.bias


def expected_param_count(side: int, d: int, left, right) -> int:
    if side == DIAGONAL:
        return 2 * d
    return int(left.size + right.size)


def absorb(t: RecolorTransform) -> CompressedLayer:
    """Fold M into the larger of the two factors."""
    if t.kx >= t.ky:
        left, right, side = t.c, t.m @ t.w, ABSORB_WHITENING
    else:
        left, right, side = t.c @ t.m, t.w, ABSORB_COLORING
    d = t.w.shape[1]
    bias = t.mu_y - left @ (right @ t.mu_x)
    count = 2 * d * min(t.kx, t.ky)
    layer = CompressedLayer(left, right, bias, t.kx, t.ky, count, side, "covnorm")
    assert layer.param_count == count
    return layer


def eta_ratio(kx: int, ky: int) -> float:
    if kx < 1:
        raise InputError("eta ratio needs kx >= 1")
    return ky / kx


def _as_pca(stats) -> Pca:
    if isinstance(stats, Pca):
        return stats
    if isinstance(stats, RunningMoments):
        return pca(stats)
    raise TypeError(f"expected Pca or RunningMoments, got {type(stats).__name__}")


def _truncations(pca_x, pca_y, threshold, ranks):
    if ranks is None:
        return truncate(pca_x, threshold), truncate(pca_y, threshold)
    kx, ky = ranks
    return truncate_to(pca_x, kx), truncate_to(pca_y, ky)


def covnorm_pipeline(
    stats_x,
    stats_y,
    samples_x,
    samples_y,
    threshold=DEFAULT_THRESHOLD,
    ridge=None,
    ranks=None,
) -> CompressedLayer:
    """PCAs -> truncation -> whitening/coloring -> least-squares M -> absorbed layer.

    ``stats_*`` may be RunningMoments or ready PCAs (joint mode passes merged
    global PCAs together with one task's samples). ``ranks=(kx, ky)`` overrides
    the explained-variance rule with fixed dimensions.
    """
    px, py = _as_pca(stats_x), _as_pca(stats_y)
    tx, ty = _truncations(px, py, threshold, ranks)
    w, c = whitening(tx), coloring(ty)
    m = fit_mini_adaptation(w, c, samples_x, samples_y, tx.mean, ty.mean, ridge)
    layer = absorb(assemble(w, m, c, tx.mean, ty.mean))
    layer.meta.update(threshold=tx.threshold_used if ranks is None else None, eta=eta_ratio(tx.k, ty.k))
    return layer


def covnorm_from_moments(
    pca_x: Pca,
    pca_y: Pca,
    sigma_xy,
    threshold=DEFAULT_THRESHOLD,
    ridge=None,
    ranks=None,
    refine=False,
) -> CompressedLayer:
    """Population path of ``covnorm_pipeline``: M is fit from exact moments.

    With ``refine=True`` M is instead obtained by gradient descent started at
    the identity pairing of components.
    """
    tx, ty = _truncations(pca_x, pca_y, threshold, ranks)
    w, c = whitening(tx), coloring(ty)
    sigma_x = pca_x.covariance()
    if refine:
        r = 0.0 if ridge is None else ridge
        m0 = np.eye(ty.k, tx.k)
        m, steps = refine_mini_adaptation(m0, w, c, sigma_x, sigma_xy, pca_y.covariance(), r)
    else:
        m = fit_mini_adaptation_moments(w, c, sigma_x, sigma_xy, ridge)
        steps = 0
    layer = absorb(assemble(w, m, c, tx.mean, ty.mean))
    layer.meta.update(
        threshold=tx.threshold_used if ranks is None else None,
        eta=eta_ratio(tx.k, ty.k),
        refine_steps=steps,
    )
    return layer
