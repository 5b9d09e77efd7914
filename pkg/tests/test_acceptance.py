"""Acceptance criteria 1-10. Each test prints one PASS/FAIL line; the terminal
summary repeats one line per criterion."""
import os
import time

import numpy as np
import pytest

from covnorm import cli, io, synthetic
from covnorm.baselines import bn_recolor, fit_factors_moments, random_factors, svd_factors, svd_truncate
from covnorm.evaluation import THRESHOLD_GRID, analytic_mse, energy_curves, first_index_exceeding
from covnorm.recolor import (
    TruncatedPca,
    absorb,
    assemble,
    coloring,
    covnorm_from_moments,
    fit_mini_adaptation_moments,
    whitening,
)
from covnorm.stats import RunningMoments, merge, pca, truncate_to


def report(number, ok, detail):
    print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    return ok


def rel_frob(b, a):
    return float(np.linalg.norm(b - a) / np.linalg.norm(a))


def criterion1_instances():
    return [synthetic.random_instance((4, 8, 16)[s % 3], seed=s, max_cond=100.0) for s in range(20)]


@pytest.mark.criterion(1, "exact recovery from population moments")
def test_criterion_01_exact_recovery():
    start = time.perf_counter()
    worst = 0.0
    for inst in criterion1_instances():
        d = inst.dim
        layer = covnorm_from_moments(inst.pca_x(), inst.pca_y(), inst.sigma_xy, ranks=(d, d), ridge=0.0)
        worst = max(worst, rel_frob(layer.matrix(), inst.a))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 5.0
    assert report(1, ok, f"worst relative Frobenius error {worst:.2e}, {elapsed:.2f} s"), (worst, elapsed)


@pytest.mark.criterion(2, "joint-mode merge matches pooled covariance")
def test_criterion_02_merge_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    inst = synthetic.random_instance(16, seed=2, mean_scale=5.0)
    x, _ = inst.sample(10_000, rng)
    pooled = np.cov(x, rowvar=False, bias=True)
    worst_pool = worst_order = 0.0
    for ways in (2, 3, 4, 5):
        for _ in range(3):
            cuts = np.sort(rng.choice(np.arange(1, x.shape[0]), ways - 1, replace=False))
            parts = [pca(RunningMoments.from_samples(chunk)) for chunk in np.split(x, cuts)]
            joint = merge(parts)
            shuffled = merge([parts[i] for i in rng.permutation(ways)])
            assert joint.n == x.shape[0]
            worst_pool = max(worst_pool, rel_frob(joint.covariance(), pooled))
            worst_order = max(worst_order, rel_frob(shuffled.covariance(), joint.covariance()))
    elapsed = time.perf_counter() - start
    ok = worst_pool < 1e-10 and worst_order < 1e-9 and elapsed < 5.0
    detail = f"vs pooled {worst_pool:.2e}, order dependence {worst_order:.2e}, {elapsed:.2f} s"
    assert report(2, ok, detail), detail


@pytest.mark.criterion(3, "absorption exactness and parameter count")
def test_criterion_03_absorption():
    d = 16
    inst = synthetic.random_instance(d, seed=3)
    px, py = inst.pca_x(), inst.pca_y()
    probes = np.random.default_rng(3).normal(size=(1000, d)) * 3.0 + inst.mu_x
    worst = 0.0
    counts_ok = True
    for kx in (1, 2, 4, 8, 16):
        for ky in (1, 2, 4, 8, 16):
            w, c = whitening(truncate_to(px, kx)), coloring(truncate_to(py, ky))
            m = fit_mini_adaptation_moments(w, c, inst.sigma_x, inst.sigma_xy)
            t = assemble(w, m, c, px.mean, py.mean)
            layer = absorb(t)
            worst = max(worst, float(np.max(np.abs(t.apply(probes) - layer.apply(probes)))))
            counts_ok &= layer.param_count == 2 * d * min(kx, ky)
    ok = worst < 1e-10 and counts_ok
    assert report(3, ok, f"max output gap {worst:.2e}, param counts exact: {counts_ok}"), worst


def _permuted(tp: TruncatedPca, perm):
    return TruncatedPca(tp.mean, tp.eigenvalues[perm], tp.components[:, perm], tp.k, tp.threshold_used)


@pytest.mark.criterion(4, "permutation robustness of the mini-adaptation layer")
def test_criterion_04_permutation():
    worst = 0.0
    for seed in range(10):
        d = 8
        inst = synthetic.random_instance(d, seed=100 + seed)
        rng = np.random.default_rng(seed)
        tx, ty = truncate_to(inst.pca_x(), 6), truncate_to(inst.pca_y(), 5)
        probes = rng.normal(size=(200, d)) + inst.mu_x
        outputs = []
        for px_perm, py_perm in ((np.arange(6), np.arange(5)), (rng.permutation(6), rng.permutation(5))):
            a, b = _permuted(tx, px_perm), _permuted(ty, py_perm)
            w, c = whitening(a), coloring(b)
            m = fit_mini_adaptation_moments(w, c, inst.sigma_x, inst.sigma_xy)
            outputs.append(absorb(assemble(w, m, c, a.mean, b.mean)).apply(probes))
        worst = max(worst, float(np.max(np.abs(outputs[0] - outputs[1]))))
    assert report(4, worst < 1e-9, f"max output change under permutation {worst:.2e}"), worst


def _budget_comparison():
    inst = synthetic.anisotropic_instance(6)
    px, py = inst.pca_x(), inst.pca_y()
    rows = []
    for r in range(1, inst.dim):
        cov = covnorm_from_moments(px, py, inst.sigma_xy, ranks=(r, r), ridge=0.0)
        svd = svd_truncate(inst.a, r, inst.mu_x, inst.mu_y)
        assert cov.param_count == svd.param_count
        rows.append(
            (r, analytic_mse(cov, inst.a, inst.sigma_x, inst.mu_x), analytic_mse(svd, inst.a, inst.sigma_x, inst.mu_x))
        )
    return inst, rows


@pytest.mark.criterion(5, "covnorm beats svd at equal parameter budget")
def test_criterion_05_covnorm_vs_svd():
    start = time.perf_counter()
    _, rows = _budget_comparison()
    elapsed = time.perf_counter() - start
    ok = all(c <= s for _, c, s in rows) and rows[0][1] < rows[0][2] and elapsed < 2.0
    detail = ", ".join(f"r={r}: {c:.3g} vs {s:.3g}" for r, c, s in rows)
    assert report(5, ok, f"{detail}; {elapsed:.2f} s"), rows


@pytest.mark.criterion(6, "PCA energy concentrates faster than singular values")
def test_criterion_06_energy_concentration():
    inst = synthetic.anisotropic_instance(6)
    curves = energy_curves(inst.pca_x(), inst.pca_y(), inst.a)
    kx = first_index_exceeding(curves.pca_x, 0.99)
    ky = first_index_exceeding(curves.pca_y, 0.99)
    ks = first_index_exceeding(curves.singular, 0.99)
    ok = kx < ks and ky < ks
    assert report(6, ok, f"0.99 reached at k={kx} (x), k={ky} (y), k={ks} (singular)"), (kx, ky, ks)


@pytest.mark.criterion(7, "diagonal recoloring fails on correlated data, matches on diagonal data")
def test_criterion_07_bn():
    inst = synthetic.correlated_instance(8, rho=0.9)
    d = inst.dim
    full = covnorm_from_moments(inst.pca_x(), inst.pca_y(), inst.sigma_xy, ranks=(d, d), ridge=0.0)
    bn = bn_recolor(inst.moments_x(), inst.moments_y())
    mse_full = analytic_mse(full, inst.a, inst.sigma_x, inst.mu_x)
    mse_bn = analytic_mse(bn, inst.a, inst.sigma_x, inst.mu_x)

    diag = synthetic.diagonal_instance(8)
    tx, ty = truncate_to(diag.pca_x(), d), truncate_to(diag.pca_y(), d)
    identity = absorb(assemble(whitening(tx), np.eye(d), coloring(ty), tx.mean, ty.mean))
    bn_diag = bn_recolor(diag.moments_x(), diag.moments_y())
    gap = max(
        float(np.max(np.abs(identity.matrix() - bn_diag.matrix()))),
        float(np.max(np.abs(identity.bias - bn_diag.bias))),
    )
    ok = mse_bn > 10.0 * mse_full and gap < 1e-9
    detail = f"correlated: bn {mse_bn:.3g} vs covnorm {mse_full:.3g}; diagonal map gap {gap:.2e}"
    assert report(7, ok, detail), detail


@pytest.mark.criterion(8, "threshold monotonicity")
def test_criterion_08_threshold_monotonicity():
    inst = synthetic.gradual_instance(16)
    px, py = inst.pca_x(), inst.pca_y()
    mse, kx, ky = [], [], []
    for t in THRESHOLD_GRID:
        layer = covnorm_from_moments(px, py, inst.sigma_xy, threshold=t, ridge=0.0)
        mse.append(analytic_mse(layer, inst.a, inst.sigma_x, inst.mu_x))
        kx.append(layer.kx)
        ky.append(layer.ky)
    slack = 1e-12 * mse[0]
    ok = (
        all(b <= a + slack for a, b in zip(mse, mse[1:]))
        and all(b >= a for a, b in zip(kx, kx[1:]))
        and all(b >= a for a, b in zip(ky, ky[1:]))
    )
    detail = ", ".join(f"t={t}: k=({a},{b}) mse={m:.3g}" for t, a, b, m in zip(THRESHOLD_GRID, kx, ky, mse))
    assert report(8, ok, detail), detail


@pytest.mark.criterion(9, "FTA sensitivity to initialization")
def test_criterion_09_fta_sensitivity():
    svd_worst = 0.0
    random_outcomes = []
    for inst in criterion1_instances():
        d = inst.dim
        kx = truncate_to(inst.pca_x(), d).k
        args = (inst.sigma_x, inst.sigma_xy, inst.sigma_y, inst.mu_x, inst.mu_y)
        from_svd = fit_factors_moments(*args, svd_factors(inst.a, kx))
        svd_res = rel_frob(from_svd.matrix(), inst.a)
        svd_worst = max(svd_worst, svd_res)
        outcomes = []
        for seed in range(5):
            fit = fit_factors_moments(*args, random_factors(d, kx, seed))
            outcomes.append((rel_frob(fit.matrix(), inst.a), fit.meta["converged"]))
        random_outcomes.append(outcomes)
    limit = 1e-3
    sensitive = [any(res > 10.0 * limit or not conv for res, conv in o) for o in random_outcomes]
    flagged = sum(not conv for o in random_outcomes for _, conv in o)
    best_random = min(res for o in random_outcomes for res, _ in o)
    ok = svd_worst <= limit and all(sensitive)
    detail = (
        f"svd init worst residual {svd_worst:.2e}; random init best residual {best_random:.2e}, "
        f"{flagged}/{5 * len(random_outcomes)} runs non-converged"
    )
    assert report(9, ok, detail), detail


def _write_inputs(root):
    inst = synthetic.random_instance(8, seed=10)
    x, y = inst.sample(500, np.random.default_rng(10))
    x2, y2 = inst.sample(300, np.random.default_rng(11))
    for name, value in (("x", x), ("y", y), ("x2", x2), ("y2", y2), ("a", inst.a), ("s", inst.sigma_x)):
        io.write_matrix(os.path.join(root, f"{name}.mat"), value)
    with open(os.path.join(root, "grid.json"), "w") as f:
        f.write('{"thresholds": [0.8, 0.9, 0.99], "methods": ["svd", "fta", "pca-fta", "bn"], '
                '"x": "x.mat", "y": "y.mat", "ref_a": "a.mat", "sigma_x": "s.mat"}')


def _run_all(root, capsys):
    p = lambda name: os.path.join(root, name)  # noqa: E731
    commands = [
        ["stats", "--in", p("x.mat"), "--out", p("x.pca")],
        ["stats", "--in", p("y.mat"), "--out", p("y.pca")],
        ["stats", "--in", p("x2.mat"), "--out", p("x2.pca")],
        ["stats", "--in", p("y2.mat"), "--out", p("y2.pca")],
        ["merge", "--in", p("x.pca"), p("x2.pca"), "--out", p("jx.pca")],
        ["merge", "--in", p("y.pca"), p("y2.pca"), "--out", p("jy.pca")],
        ["compress", "--method", "covnorm", "--x", p("x.mat"), "--y", p("y.mat"), "--out", p("c.lay")],
        ["compress", "--method", "covnorm", "--x", p("x.mat"), "--y", p("y.mat"),
         "--pca-x", p("jx.pca"), "--pca-y", p("jy.pca"), "--threshold", "0.95", "--out", p("cj.lay")],
        ["compress", "--method", "svd", "--rank", "3", "--x", p("x.mat"), "--y", p("y.mat"), "--out", p("s.lay")],
        ["compress", "--method", "fta", "--rank", "3", "--seed", "4", "--x", p("x.mat"), "--y", p("y.mat"),
         "--out", p("f.lay")],
        ["compress", "--method", "svd-fta", "--rank", "2", "--x", p("x.mat"), "--y", p("y.mat"), "--out", p("sf.lay")],
        ["compress", "--method", "pca-fta", "--rank", "2", "--x", p("x.mat"), "--y", p("y.mat"), "--out", p("pf.lay")],
        ["compress", "--method", "bn", "--x", p("x.mat"), "--y", p("y.mat"), "--out", p("b.lay")],
        ["eval", "--layer", p("c.lay"), "--x", p("x2.mat"), "--y", p("y2.mat"),
         "--ref-a", p("a.mat"), "--sigma-x", p("s.mat"), "--out", p("report.csv")],
        ["frontier", "--config", p("grid.json"), "--out", p("frontier.csv")],
    ]
    stdout = []
    for argv in commands:
        code = cli.main(argv)
        assert code == 0, argv
        stdout.append(capsys.readouterr().out)
    outputs = {}
    for name in sorted(os.listdir(root)):
        with open(os.path.join(root, name), "rb") as f:
            outputs[name] = f.read()
    return outputs, stdout


@pytest.mark.criterion(10, "determinism and byte-exact format round trips")
def test_criterion_10_determinism(tmp_path, capsys):
    roots = [tmp_path / "a", tmp_path / "b"]
    results = []
    for root in roots:
        root.mkdir()
        _write_inputs(str(root))
        results.append(_run_all(str(root), capsys))
    (files_a, out_a), (files_b, out_b) = results
    same_files = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)
    same_stdout = [o.replace(str(roots[0]), "") for o in out_a] == [o.replace(str(roots[1]), "") for o in out_b]

    round_trips = {}
    for name, data in files_a.items():
        if name.endswith(".mat"):
            round_trips[name] = io.encode_matrix(io.decode_matrix(data)) == data
        elif name.endswith(".pca"):
            round_trips[name] = io.encode_pca(io.decode_pca(data)) == data
        elif name.endswith(".lay"):
            round_trips[name] = io.encode_layer(io.decode_layer(data)) == data
    formats = {os.path.splitext(n)[1] for n in round_trips}
    ok = same_files and same_stdout and all(round_trips.values()) and formats == {".mat", ".pca", ".lay"}
    detail = (
        f"{len(files_a)} output files identical: {same_files}; stdout identical: {same_stdout}; "
        f"{sum(round_trips.values())}/{len(round_trips)} files round-trip byte-exactly"
    )
    assert report(10, ok, detail), detail
