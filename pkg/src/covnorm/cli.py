"""Command-line interface.

    covnorm stats    --in samples.mat --out stream.pca
    covnorm merge    --in a.pca b.pca ... --out joint.pca
    covnorm compress --method covnorm --x x.mat --y y.mat --out layer.lay
    covnorm eval     --layer layer.lay --x x.mat --y y.mat --out report.csv
    covnorm frontier --config grid.json --out frontier.csv

Joint mode: ``merge`` the per-task PCAs, then ``compress`` each task with
``--pca-x``/``--pca-y`` pointing at the merged files.

Exit codes: 2 for bad arguments, files or shapes; 3 for degenerate
statistics; 4 for optimizer divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io as cio
from .baselines import (
    BaselineSpec,
    bn_recolor,
    fit_factors,
    fit_full_map,
    pca_factors,
    random_factors,
    svd_factors,
    svd_truncate,
)
from .errors import (
    CovNormError,
    DegeneracyError,
    DimensionError,
    FormatError,
    InputError,
    InsufficientDataError,
    OptimizationError,
    RankDeficiencyError,
)
from .evaluation import (
    RANK_EXPONENTS,
    CovNormConfig,
    DataBundle,
    EvalReport,
    analytic_mse,
    compare,
    data_mse,
    default_ranks,
    reports_to_csv,
)
from .recolor import covnorm_pipeline, eta_ratio
from .stats import DEFAULT_THRESHOLD, RunningMoments, merge, pca, retained_dimension
from . import synthetic

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_DIVERGED = 4
REPORT_THRESHOLDS = (0.9, 0.95, 0.99)
CLI_METHODS = ("covnorm", "svd", "fta", "svd-fta", "pca-fta", "bn")


class UsageError(CovNormError):
    pass


def exit_code(exc: Exception) -> int:
    if isinstance(exc, OptimizationError):
        return EXIT_DIVERGED
    if isinstance(exc, (DegeneracyError, InsufficientDataError, RankDeficiencyError)):
        return EXIT_DEGENERATE
    return EXIT_USAGE


def _read_samples(path, name):
    x = cio.read_matrix(path)
    if x.shape[0] < 1:
        raise DimensionError(f"{name} sample file {path} is empty")
    return x


def _read_pair(x_path, y_path):
    x = _read_samples(x_path, "x")
    y = _read_samples(y_path, "y")
    if x.shape != y.shape:
        raise DimensionError(f"x samples {x.shape} and y samples {y.shape} differ in shape")
    return x, y


def cmd_stats(args):
    samples = cio.read_matrix(args.input)
    p = pca(RunningMoments.from_samples(samples) if samples.shape[0] else RunningMoments.empty(samples.shape[1]))
    cio.write_pca(args.out, p)
    print(f"d {p.dim}")
    print(f"n {p.n}")
    for t in REPORT_THRESHOLDS:
        try:
            k = str(retained_dimension(p.eigenvalues, t))
        except DegeneracyError:
            k = "undefined"
        print(f"k@{t} {k}")


def cmd_merge(args):
    parts = [cio.read_pca(path) for path in args.input]
    joint = merge(parts)
    cio.write_pca(args.out, joint)
    print(f"d {joint.dim}")
    print(f"n {joint.n}")


def _relative_residual(layer, x, y):
    centered = y - y.mean(axis=0)
    total = float(np.mean(np.sum(centered * centered, axis=1)))
    err = data_mse(layer, x, y)
    return err / total if total > 0.0 else err


def cmd_compress(args):
    method = args.method
    if method not in ("covnorm", "bn") and args.rank is None:
        raise UsageError(f"--rank is required for --method {method}")
    x, y = _read_pair(args.x, args.y)
    px = cio.read_pca(args.pca_x) if args.pca_x else pca(RunningMoments.from_samples(x))
    py = cio.read_pca(args.pca_y) if args.pca_y else pca(RunningMoments.from_samples(y))
    if px.dim != x.shape[1] or py.dim != y.shape[1]:
        raise DimensionError("PCA dimension does not match the samples")

    full_map = None
    if method == "covnorm":
        layer = covnorm_pipeline(px, py, x, y, args.threshold, args.ridge)
    elif method == "bn":
        layer = bn_recolor(px, py)
    else:
        r = args.rank
        if method in ("svd", "svd-fta"):
            full_map = fit_full_map(x, y, px.mean, py.mean, 0.0 if args.ridge is None else args.ridge)
        if method == "svd":
            layer = svd_truncate(full_map, r, px.mean, py.mean)
        else:
            if method == "svd-fta":
                init = svd_factors(full_map, r)
            elif method == "fta":
                init = random_factors(x.shape[1], r, args.seed)
            else:
                init = pca_factors(px, py, r)
            layer = fit_factors(x, y, px.mean, py.mean, init, method=method.replace("-", "_"))
    cio.write_layer(args.out, layer)
    print(f"param_count {layer.param_count}")
    print(f"kx {layer.kx}")
    print(f"ky {layer.ky}")
    print(f"eta {eta_ratio(layer.kx, layer.ky)!r}")
    print(f"fit_residual {_relative_residual(layer, x, y)!r}")
    if full_map is not None:
        gap = np.linalg.norm(layer.matrix() - full_map) / np.linalg.norm(full_map)
        print(f"map_residual {float(gap)!r}")
    if "converged" in layer.meta:
        print(f"converged {layer.meta['converged']}")
        print(f"iterations {layer.meta['iterations']}")


def _append_text(path, text, header):
    existing = ""
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as f:
            existing = f.read()
    body = text if existing else header + text
    cio.atomic_write(path, (existing + body).encode("utf-8"))


def cmd_eval(args):
    layer = cio.read_layer(args.layer)
    x, y = _read_pair(args.x, args.y)
    frob = analytic = None
    if args.ref_a:
        a = cio.read_matrix(args.ref_a)
        frob = float(np.linalg.norm(layer.matrix() - a) / np.linalg.norm(a))
        if args.sigma_x:
            analytic = analytic_mse(layer, a, cio.read_matrix(args.sigma_x), x.mean(axis=0))
    elif args.sigma_x:
        raise UsageError("--sigma-x needs --ref-a")
    report = EvalReport(
        args.method or layer.method,
        layer.kx,
        layer.ky,
        layer.rank if layer.method != "covnorm" else None,
        layer.param_count,
        frob,
        data_mse(layer, x, y),
        analytic,
        eta_ratio(layer.kx, layer.ky),
    )
    full = reports_to_csv([report])
    header, row = full.split("\n", 1)
    _append_text(args.out, row, header + "\n")
    print(row, end="")


INSTANCE_KINDS = {
    "random": synthetic.random_instance,
    "anisotropic": synthetic.anisotropic_instance,
    "correlated": synthetic.correlated_instance,
    "diagonal": synthetic.diagonal_instance,
    "gradual": synthetic.gradual_instance,
}


@dataclass
class FrontierConfig:
    """Grid specification for ``covnorm frontier`` (JSON object with these keys)."""

    thresholds: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    ranks: list | None = None
    seeds: list = field(default_factory=lambda: [0])
    ridge: float | None = None
    x: str | None = None
    y: str | None = None
    eval_x: str | None = None
    eval_y: str | None = None
    ref_a: str | None = None
    sigma_x: str | None = None
    instance: dict | None = None

    @classmethod
    def load(cls, path) -> "FrontierConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read grid config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("grid config must be a JSON object")
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown grid config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        base = os.path.dirname(os.path.abspath(path))
        for key in ("x", "y", "eval_x", "eval_y", "ref_a", "sigma_x"):
            value = getattr(cfg, key)
            if value is not None:
                setattr(cfg, key, os.path.join(base, value))
        return cfg

    def method_list(self, d: int) -> list:
        for m in self.methods:
            if m not in CLI_METHODS or m == "covnorm":
                raise UsageError(f"unknown baseline method {m!r} in grid")
        out = [CovNormConfig(float(t), self.ridge) for t in self.thresholds]
        ranks = self.ranks if self.ranks is not None else default_ranks(d, RANK_EXPONENTS)
        for m in self.methods:
            name = m.replace("-", "_")
            if name == "bn":
                out.append(BaselineSpec("bn"))
                continue
            seeds = self.seeds if name == "fta" else [0]
            for r in ranks:
                for s in seeds:
                    out.append(BaselineSpec(name, int(r), int(s)))
        if not out:
            raise UsageError("grid is empty: give thresholds and/or methods")
        return out

    def bundle(self) -> DataBundle:
        if self.instance is not None:
            spec = dict(self.instance)
            kind = spec.pop("kind", "random")
            if kind not in INSTANCE_KINDS:
                raise UsageError(f"unknown instance kind {kind!r}")
            inst = INSTANCE_KINDS[kind](**spec)
            return DataBundle.from_instance(inst)
        if not (self.x and self.y):
            raise UsageError("grid config needs either 'instance' or both 'x' and 'y'")
        x, y = _read_pair(self.x, self.y)
        ex = ey = None
        if self.eval_x or self.eval_y:
            ex, ey = _read_pair(self.eval_x, self.eval_y)
        a = cio.read_matrix(self.ref_a) if self.ref_a else None
        sx = cio.read_matrix(self.sigma_x) if self.sigma_x else None
        return DataBundle.from_samples(x, y, ex, ey, a, sx)


def cmd_frontier(args):
    cfg = FrontierConfig.load(args.config)
    if not cfg.thresholds and not cfg.methods:
        raise UsageError("grid is empty: give thresholds and/or methods")
    try:
        bundle = cfg.bundle()
    except TypeError as exc:
        raise UsageError(f"bad instance spec: {exc}") from exc
    reports = compare(cfg.method_list(bundle.dim), bundle)
    text = reports_to_csv(reports)
    cio.atomic_write(args.out, text.encode("utf-8"))
    print(f"rows {len(reports)}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covnorm", description="Compress linear adaptation layers by covariance normalization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="estimate a PCA from a sample matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("merge", help="pool PCAs of several datasets")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("compress", help="fit a compressed layer")
    p.add_argument("--method", choices=CLI_METHODS, required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--pca-x")
    p.add_argument("--pca-y")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--rank", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("eval", help="append one evaluation row to a CSV report")
    p.add_argument("--layer", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--ref-a")
    p.add_argument("--sigma-x")
    p.add_argument("--method", help="label for the method column")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("frontier", help="error-vs-parameter grid as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_frontier)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        args.func(args)
    except (CovNormError, InputError, DimensionError, FormatError) as exc:
        print(f"covnorm: error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
