"""Dense linear-algebra kernel.

Matrices are plain float64 numpy arrays. Every routine here is a pure
function: identical input bytes give identical output bytes.

The symmetric eigensolver is a cyclic Jacobi method using the round-robin
(tournament) ordering, so each round applies ``d // 2`` disjoint rotations
at once as vectorized row/column updates.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import DegeneracyError, DimensionError, InputError, RankDeficiencyError, CovNormError

SYMMETRY_TOL = 1e-8
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
PSD_CLAMP_TOL = 1e-10
# Reciprocal condition bound below which normal equations count as singular.
RCOND_MIN = 1e-13


def as_matrix(a, name="matrix") -> np.ndarray:
    """Convert ``a`` to a finite 2-D float64 array or raise."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def as_vector(v, name="vector", size=None) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise DimensionError(f"{name} has length {arr.shape[0]}, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SymEig:
    """Eigenvalues sorted descending; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


@dataclass(frozen=True)
class Svd:
    """Thin SVD ``a = u @ diag(singular_values) @ v.T``."""

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


@lru_cache(maxsize=None)
def _round_robin(d: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Pair schedule covering every (p, q), p < q, once per sweep."""
    m = d + (d % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < d and q < d:
                ps.append(min(p, q))
                qs.append(max(p, q))
        if ps:
            rounds.append((np.array(ps), np.array(qs)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return tuple(rounds)


def _rotation(app, aqq, apq):
    """Cosine/sine annihilating the (p, q) entry of a symmetric 2x2 block."""
    active = apq != 0.0
    safe = np.where(active, apq, 1.0)
    theta = (aqq - app) / (2.0 * safe)
    sign = np.where(theta >= 0.0, 1.0, -1.0)
    t = sign / (np.abs(theta) + np.hypot(theta, 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    c = np.where(active, c, 1.0)
    s = np.where(active, s, 0.0)
    return c, s


def _rotate_columns(m, p, q, c, s):
    mp = m[:, p].copy()
    mq = m[:, q]
    m[:, p] = c * mp - s * mq
    m[:, q] = s * mp + c * mq


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (first index wins ties)."""
    if vectors.size == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[idx, np.arange(vectors.shape[1])] < 0.0, -1.0, 1.0)
    return signs


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")


def sym_eig(a) -> SymEig:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_eig needs a square matrix, got shape {a.shape}")
    _check_finite(a, "sym_eig input")
    d = a.shape[0]
    scale = max(1.0, float(np.max(np.abs(a)))) if d else 1.0
    if d and np.max(np.abs(a - a.T)) >= SYMMETRY_TOL * scale:
        raise InputError("sym_eig input is not symmetric")
    work = 0.5 * (a + a.T)
    vecs = np.eye(d)
    norm = np.linalg.norm(work)
    target = JACOBI_TOL * norm
    rounds = _round_robin(d)

    def off(m):
        return np.linalg.norm(m - np.diag(np.diag(m)))

    sweeps = 0
    while off(work) > target:
        if sweeps == JACOBI_MAX_SWEEPS:
            raise CovNormError(f"Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")
        for p, q in rounds:
            c, s = _rotation(work[p, p], work[q, q], work[p, q])
            rot = np.eye(d)
            rot[p, p] = c
            rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            work = rot.T @ work @ rot
            work[p, q] = 0.0
            work[q, p] = 0.0
            vecs = vecs @ rot
        sweeps += 1

    vals = np.diag(work).copy()
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs * _fix_signs(vecs)
    return SymEig(vals, vecs)


def psd_eig(a) -> SymEig:
    """``sym_eig`` for nominally PSD input: clamps tiny negative eigenvalues to zero.

    Eigenvalues below ``-1e-10 * lambda_max`` signal a corrupted covariance and raise.
    """
    eig = sym_eig(a)
    vals = eig.eigenvalues
    if vals.size == 0:
        return eig
    top = max(float(vals[0]), 0.0)
    if vals[-1] < -PSD_CLAMP_TOL * top or (top == 0.0 and vals[-1] < 0.0):
        raise InputError(f"matrix is not PSD: eigenvalue {vals[-1]:.3e} vs max {top:.3e}")
    return SymEig(np.maximum(vals, 0.0), eig.eigenvectors)


def _complete_basis(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Replace columns not in ``keep`` with orthonormal vectors orthogonal to the kept ones."""
    m, k = u.shape
    basis = [u[:, j] for j in range(k) if keep[j]]
    out = u.copy()
    candidates = iter(np.eye(m))
    for j in range(k):
        if keep[j]:
            continue
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-8:
                v /= nv
                basis.append(v)
                out[:, j] = v
                break
    return out


def _one_sided_polish(b: np.ndarray, v: np.ndarray, max_sweeps=30):
    """Hestenes sweeps making the columns of ``b`` mutually orthogonal; ``v`` follows."""
    n = b.shape[1]
    rounds = _round_robin(n)
    for _ in range(max_sweeps):
        worst = 0.0
        for p, q in rounds:
            bp, bq = b[:, p], b[:, q]
            alpha = np.einsum("ij,ij->j", bp, bp)
            beta = np.einsum("ij,ij->j", bq, bq)
            gamma = np.einsum("ij,ij->j", bp, bq)
            denom = np.sqrt(alpha * beta)
            ratio = np.where(denom > 0.0, np.abs(gamma) / np.where(denom > 0.0, denom, 1.0), 0.0)
            worst = max(worst, float(np.max(ratio)))
            gamma = np.where(ratio > 1e-15, gamma, 0.0)
            c, s = _rotation(alpha, beta, gamma)
            _rotate_columns(b, p, q, c, s)
            _rotate_columns(v, p, q, c, s)
        if worst <= 1e-15:
            break
    return b, v


def svd(a) -> Svd:
    """Thin SVD via the eigendecomposition of the smaller Gram matrix.

    Right singular vectors come from ``sym_eig(a.T @ a)``; a few one-sided
    Jacobi sweeps then re-orthogonalize ``a @ v`` so that ``u`` stays
    orthonormal for moderately ill-conditioned input. Accuracy of small
    singular values degrades past condition numbers around 1e7.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"svd needs a 2-D matrix, got shape {a.shape}")
    _check_finite(a, "svd input")
    m, n = a.shape
    if m < n:
        t = svd(a.T)
        u, s, v = t.v, t.singular_values, t.u
        signs = _fix_signs(u)
        return Svd(u * signs, s, v * signs)

    gram = a.T @ a
    v = sym_eig(0.5 * (gram + gram.T)).eigenvectors
    b = a @ v
    b, v = _one_sided_polish(b, v)
    s = np.linalg.norm(b, axis=0)
    order = np.argsort(-s, kind="stable")
    s, b, v = s[order], b[:, order], v[:, order]
    tol = max(m, n) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    keep = s > tol
    u = np.zeros_like(b)
    u[:, keep] = b[:, keep] / s[keep]
    if not np.all(keep):
        u = _complete_basis(u, keep)
    signs = _fix_signs(u)
    return Svd(u * signs, s, v * signs)


def least_squares(z, t, ridge=0.0) -> np.ndarray:
    """Solve ``min_M ||t - M z||_F^2 + ridge ||M||_F^2`` by normal equations.

    ``z`` is k x n (features by samples), ``t`` is m x n; returns M (m x k).
    """
    z = as_matrix(z, "z")
    t = as_matrix(t, "t")
    if z.shape[1] != t.shape[1] or z.shape[1] < 1:
        raise DimensionError(f"z {z.shape} and t {t.shape} need a shared column count >= 1")
    if not np.isfinite(ridge) or ridge < 0.0:
        raise InputError(f"ridge must be a nonnegative finite number, got {ridge}")
    k = z.shape[0]
    normal = z @ z.T + ridge * np.eye(k)
    rhs = z @ t.T
    return solve_normal(normal, rhs, ridge).T


def solve_normal(normal, rhs, ridge=0.0) -> np.ndarray:
    """Symmetric positive-definite solve ``normal @ x = rhs`` with a singularity check."""
    normal = 0.5 * (normal + normal.T)
    try:
        factor, lower = scipy.linalg.cho_factor(normal, check_finite=False)
    except np.linalg.LinAlgError:
        factor = None
    if factor is not None:
        piv = np.diag(factor) ** 2
        if piv.size and piv.min() <= RCOND_MIN * piv.max():
            factor = None
    if factor is None:
        hint = "set ridge > 0" if ridge == 0.0 else "increase ridge"
        raise RankDeficiencyError(f"normal equations are singular ({hint})")
    return scipy.linalg.cho_solve((factor, lower), rhs, check_finite=False)


def pinv_scaled_orthogonal(c) -> np.ndarray:
    """Pseudo-inverse of ``P @ diag(sqrt(e))`` for orthonormal P: ``diag(1/sqrt(e)) @ P.T``."""
    c = as_matrix(c, "coloring factor")
    sq = np.einsum("ij,ij->j", c, c)
    bad = np.flatnonzero(sq <= 0.0)
    if bad.size:
        raise DegeneracyError(f"column {bad[0]} of the coloring factor has zero scale")
    return c.T / sq[:, None]
