"""Metrics and the method-comparison harness.

All errors are regression errors on the adapter output (``metric = "regression"``);
nothing here measures task accuracy.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import (
    BaselineSpec,
    FitConfig,
    bn_recolor,
    fit_factors_moments,
    full_map_from_moments,
    pca_factors,
    random_factors,
    sample_moments,
    svd_factors,
    svd_truncate,
)
from .errors import DegeneracyError, DimensionError
from .linalg import as_matrix, as_vector, psd_eig, svd
from .recolor import CompressedLayer, covnorm_from_moments
from .stats import DEFAULT_THRESHOLD, explained_variance, pca_from_covariance
from .synthetic import LinearInstance

CSV_COLUMNS = (
    "method",
    "kx",
    "ky",
    "rank",
    "param_count",
    "frobenius_error",
    "data_mse",
    "analytic_mse",
    "eta",
    "seed",
    "threshold",
)
THRESHOLD_GRID = (0.8, 0.9, 0.95, 0.99, 0.995)
RANK_EXPONENTS = (2, 3, 4, 5, 6)


def data_mse(layer: CompressedLayer, samples_x, samples_y) -> float:
    """Mean over rows of ``||y_i - layer(x_i)||^2``."""
    x = as_matrix(samples_x, "samples_x")
    y = as_matrix(samples_y, "samples_y")
    if x.shape != y.shape or x.shape[1] != layer.dim:
        raise DimensionError(f"sample shapes {x.shape}, {y.shape} do not fit a d={layer.dim} layer")
    if x.shape[0] < 1:
        raise DimensionError("data_mse needs at least one sample")
    err = y - layer.apply(x)
    return float(np.mean(np.sum(err * err, axis=1)))


def analytic_mse(layer: CompressedLayer, a_true, sigma_x, mu_x, b_true=None) -> float:
    """``E||A x + b - layer(x)||^2`` for x with mean ``mu_x`` and covariance ``sigma_x``.

    Equals ``tr(D Sigma_x D^T) + ||D mu_x + b - bias||^2`` with ``D = A - L R``.
    """
    a = as_matrix(a_true, "a_true")
    sigma_x = as_matrix(sigma_x, "sigma_x")
    d = layer.dim
    if a.shape != (d, d) or sigma_x.shape != (d, d):
        raise DimensionError("reference shapes do not match the layer")
    psd_eig(sigma_x)
    mu_x = as_vector(mu_x, "mu_x", d)
    b = np.zeros(d) if b_true is None else as_vector(b_true, "b_true", d)
    diff = a - layer.matrix()
    offset = diff @ mu_x + b - layer.bias
    return max(0.0, float(np.sum((diff @ sigma_x) * diff) + offset @ offset))


@dataclass(frozen=True)
class EnergyCurves:
    """Cumulative energy fractions indexed by k = 1..d."""

    pca_x: np.ndarray
    pca_y: np.ndarray
    singular: np.ndarray

    def rows(self):
        for k, (ex, ey, es) in enumerate(zip(self.pca_x, self.pca_y, self.singular), start=1):
            yield k, float(ex), float(ey), float(es)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("k", "pca_x", "pca_y", "singular"))
        for k, ex, ey, es in self.rows():
            writer.writerow((k, repr(ex), repr(ey), repr(es)))
        return buf.getvalue()


def energy_curves(pca_x, pca_y, a) -> EnergyCurves:
    """Explained variance of both PCAs next to the squared-singular-value curve of A."""
    a = as_matrix(a, "a")
    if a.shape != (pca_x.dim, pca_y.dim):
        raise DimensionError("matrix shape does not match the PCAs")
    s2 = svd(a).singular_values ** 2
    if not s2.sum() > 0.0:
        raise DegeneracyError("matrix has zero singular-value mass")
    return EnergyCurves(
        explained_variance(pca_x.eigenvalues),
        explained_variance(pca_y.eigenvalues),
        np.cumsum(s2) / s2.sum(),
    )


def first_index_exceeding(curve, level: float) -> int:
    """1-based k where the cumulative curve first exceeds ``level`` (len(curve) if never)."""
    hits = np.flatnonzero(np.asarray(curve) > level)
    return int(hits[0]) + 1 if hits.size else len(curve)


@dataclass(frozen=True)
class CovNormConfig:
    threshold: float = DEFAULT_THRESHOLD
    ridge: float | None = None
    ranks: tuple[int, int] | None = None
    refine: bool = False


@dataclass(frozen=True)
class EvalReport:
    method: str
    kx: int
    ky: int
    rank: int | None
    param_count: int
    frobenius_error: float | None
    data_mse: float | None
    analytic_mse: float | None
    eta: float
    seed: int | None = None
    threshold: float | None = None
    metric: str = "regression"

    def __post_init__(self):
        for name in ("frobenius_error", "data_mse", "analytic_mse", "eta"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def row(self) -> list[str]:
        return [_cell(getattr(self, c)) for c in CSV_COLUMNS]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def reports_to_csv(reports, header=True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


@dataclass(frozen=True)
class DataBundle:
    """Moments the methods are fit on, plus optional held-out samples and a reference map.

    ``a_true``, ``ref_sigma_x`` and ``ref_mu_x`` enable the Frobenius and analytic
    metrics; ``eval_x``/``eval_y`` enable ``data_mse``.
    """

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_xy: np.ndarray
    sigma_y: np.ndarray
    n: int
    eval_x: np.ndarray | None = None
    eval_y: np.ndarray | None = None
    a_true: np.ndarray | None = None
    ref_sigma_x: np.ndarray | None = None
    ref_mu_x: np.ndarray | None = None
    fit: FitConfig = field(default_factory=FitConfig)

    @classmethod
    def from_instance(cls, inst: LinearInstance, n=10**6, eval_x=None, eval_y=None, fit=FitConfig()):
        return cls(
            inst.mu_x, inst.mu_y, inst.sigma_x, inst.sigma_xy, inst.sigma_y, n,
            eval_x, eval_y, inst.a, inst.sigma_x, inst.mu_x, fit,
        )

    @classmethod
    def from_samples(cls, x, y, eval_x=None, eval_y=None, a_true=None, ref_sigma_x=None, fit=FitConfig()):
        x = as_matrix(x, "samples_x")
        y = as_matrix(y, "samples_y")
        mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
        sx, sxy, sy = sample_moments(x, y, mu_x, mu_y)
        if eval_x is None:
            eval_x, eval_y = x, y
        ref_mu = mu_x if a_true is not None else None
        return cls(mu_x, mu_y, sx, sxy, sy, x.shape[0], eval_x, eval_y, a_true, ref_sigma_x, ref_mu, fit)

    @property
    def dim(self) -> int:
        return self.mu_x.shape[0]

    def pca_x(self):
        return pca_from_covariance(self.mu_x, self.sigma_x, self.n)

    def pca_y(self):
        return pca_from_covariance(self.mu_y, self.sigma_y, self.n)


def default_ranks(d: int, exponents=RANK_EXPONENTS) -> list[int]:
    """Low-rank grid ``d / 2**i``, floored and kept at least 1."""
    return [max(1, d // 2**i) for i in exponents]


def build_layer(method, bundle: DataBundle, full_map=None) -> CompressedLayer:
    """Fit one method on the bundle's moments."""
    if isinstance(method, CovNormConfig):
        return covnorm_from_moments(
            bundle.pca_x(), bundle.pca_y(), bundle.sigma_xy,
            method.threshold, method.ridge, method.ranks, method.refine,
        )
    spec: BaselineSpec = method
    mu_x, mu_y = bundle.mu_x, bundle.mu_y
    if spec.method == "bn":
        return bn_recolor(bundle.pca_x(), bundle.pca_y())
    if full_map is None and spec.method in ("svd", "svd_fta"):
        full_map = full_map_from_moments(bundle.sigma_x, bundle.sigma_xy)
    if spec.method == "svd":
        return svd_truncate(full_map, spec.rank, mu_x, mu_y)
    if spec.method == "svd_fta":
        init = svd_factors(full_map, spec.rank)
    elif spec.method == "fta":
        init = random_factors(bundle.dim, spec.rank, spec.init_seed)
    else:
        init = pca_factors(bundle.pca_x(), bundle.pca_y(), spec.rank)
    return fit_factors_moments(
        bundle.sigma_x, bundle.sigma_xy, bundle.sigma_y, mu_x, mu_y, init, bundle.fit, spec.method
    )


def evaluate(layer: CompressedLayer, bundle: DataBundle, method=None) -> EvalReport:
    frob = data = analytic = None
    if bundle.a_true is not None:
        frob = float(np.linalg.norm(layer.matrix() - bundle.a_true) / np.linalg.norm(bundle.a_true))
        if bundle.ref_sigma_x is not None:
            analytic = analytic_mse(layer, bundle.a_true, bundle.ref_sigma_x, bundle.ref_mu_x)
    if bundle.eval_x is not None:
        data = data_mse(layer, bundle.eval_x, bundle.eval_y)
    seed = threshold = rank = None
    name = layer.method
    if isinstance(method, CovNormConfig):
        threshold = method.threshold if method.ranks is None else None
    elif isinstance(method, BaselineSpec):
        name = method.method
        rank = None if method.method == "bn" else method.rank
        seed = method.init_seed if method.method == "fta" else None
    return EvalReport(
        name, layer.kx, layer.ky, rank, layer.param_count, frob, data, analytic,
        layer.ky / layer.kx, seed, threshold,
    )


def compare(methods, bundle: DataBundle) -> list[EvalReport]:
    """One report per method, in the order given."""
    full_map = None
    if any(isinstance(m, BaselineSpec) and m.method in ("svd", "svd_fta") for m in methods):
        full_map = full_map_from_moments(bundle.sigma_x, bundle.sigma_xy)
    return [evaluate(build_layer(m, bundle, full_map), bundle, m) for m in methods]
