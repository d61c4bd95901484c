"""Exit criteria of the build, one test per criterion.

Criteria 5 and 6 share a single desk-scale benchmark run (n=1e4, k=200,
s=30, p=500); expect a few minutes on one core.
"""

import subprocess
import sys

import mpmath
import numpy as np
import pytest

from cdforest import Dataset, fit
from cdforest.forest import WeightedEcdf, default_min_samples_leaf, quantile
from cdforest.simbench import BenchmarkConfig, run_benchmark, true_cdf, true_quantile

from conftest import ACCEPTANCE_LINES, random_instance
from oracles import per_tree_weights

# Reported (M_RMSE, M_Bias, M_Variance) at alpha 0.1, 0.5, 0.9 for the full-scale run.
REFERENCE_QUANTILE = {
    0.1: {"original": (0.6382, 0.2382, 0.2826), "bootstrap": (0.6410, 0.1926, 0.3115)},
    0.5: {"original": (0.5470, 0.1530, 0.2615), "bootstrap": (0.5714, 0.1274, 0.2874)},
    0.9: {"original": (0.6786, 0.2443, 0.6526), "bootstrap": (0.6842, 0.2074, 0.6837)},
}
REFERENCE_M_KS = {"original": 0.1295, "bootstrap": 0.1344}


def test_1_weight_oracle_equivalence(acceptance):
    rng = np.random.default_rng(20240101)
    worst = 0.0
    summands_equal = True
    for _ in range(200):
        ds, hp = random_instance(rng, n_max=50, d_max=3, k_max=5)
        forest = fit(ds, hp, n_jobs=1)
        for x in rng.normal(scale=1.5, size=(3, ds.d)):
            for scheme in ("bootstrap", "original"):
                expected_rows = per_tree_weights(forest, ds.features, x, scheme)
                got_rows = forest.tree_weights(x, scheme)
                summands_equal &= np.array_equal(expected_rows, got_rows)
                expected = expected_rows.sum(axis=0) / forest.k
                worst = max(worst, float(np.abs(forest.weights(x, scheme) - expected).max()))
    ok = summands_equal and worst <= 1e-12
    acceptance(1, ok, f"summands bitwise equal={summands_equal}, max |avg diff|={worst:.1e} (tol 1e-12)")
    assert summands_equal
    assert worst <= 1e-12


def test_2_structural_invariants(acceptance):
    rng = np.random.default_rng(7)
    alphas = np.arange(1, 100) / 100
    worst_sum = 0.0
    min_weight = np.inf
    cdf_monotone = quantile_monotone = True
    for _ in range(100):
        ds, hp = random_instance(rng)
        forest = fit(ds, hp, n_jobs=1)
        for x in rng.normal(scale=1.5, size=(3, ds.d)):
            for scheme in ("bootstrap", "original"):
                w = forest.weights(x, scheme)
                worst_sum = max(worst_sum, abs(w.sum() - 1.0))
                min_weight = min(min_weight, w.min())
                e = WeightedEcdf.from_weights(ds.responses, w)
                cdf_monotone &= bool(np.all(np.diff(e.cum_weights) >= 0)) and abs(e.cum_weights[-1] - 1) <= 1e-9
                q = [quantile(e, a) for a in alphas]
                quantile_monotone &= bool(np.all(np.diff(q) >= 0))
    ok = worst_sum <= 1e-9 and min_weight >= 0 and cdf_monotone and quantile_monotone
    acceptance(2, ok, f"max |sum-1|={worst_sum:.1e}, min weight={min_weight:.1e}, "
                      f"cdf monotone={cdf_monotone}, quantile monotone={quantile_monotone}")
    assert ok


def test_3_shift_equivariance(acceptance):
    c = 7.3
    rng = np.random.default_rng(33)
    alphas = np.arange(1, 100) / 100
    weights_equal = True
    worst = 0.0
    for _ in range(20):
        ds, hp = random_instance(rng)
        shifted = Dataset(ds.features, ds.responses + c)
        a, b = fit(ds, hp, n_jobs=1), fit(shifted, hp, n_jobs=1)
        X = rng.normal(scale=1.5, size=(5, ds.d))
        for scheme in ("bootstrap", "original"):
            weights_equal &= np.array_equal(a.weight_matrix(X, scheme), b.weight_matrix(X, scheme))
            qa = a.predict_quantiles(X, alphas, scheme)
            qb = b.predict_quantiles(X, alphas, scheme)
            worst = max(worst, float(np.abs(qb - qa - c).max()))
    ok = weights_equal and worst <= 1e-9
    acceptance(3, ok, f"weights unchanged={weights_equal}, max |shift - 7.3|={worst:.1e} (tol 1e-9)")
    assert ok


def test_4_analytic_oracles(acceptance):
    mpmath.mp.dps = 30
    rng = np.random.default_rng(4)
    X = rng.gamma(2.0, 1.0, size=(10_000, 3))
    y = X.sum(axis=1) + rng.normal(0, 4, size=10_000)
    sigma = 2.0
    got = true_cdf(X, y, sigma)
    ref = np.array([float(mpmath.ncdf(mpmath.mpf(float(v)) , 0, 1)) for v in (y - X.sum(axis=1)) / sigma])
    cdf_err = float(np.abs(got - ref).max())
    alphas = np.arange(1, 100) / 100
    x = np.array([0.7, 3.1, 1.2])
    inv_err = float(np.abs(true_cdf(x, true_quantile(x, alphas, sigma), sigma) - alphas).max())
    ok = cdf_err <= 1e-6 and inv_err <= 1e-6
    acceptance(4, ok, f"max |cdf - mpmath|={cdf_err:.1e}, max |F(q(a)) - a|={inv_err:.1e} (tol 1e-6)")
    assert ok


SCALED = BenchmarkConfig(
    n=10_000,
    n_trees=200,
    min_samples_leaf=default_min_samples_leaf(10_000),
    replications=30,
    query_points=500,
    alphas=(0.1, 0.5, 0.9),
    seed=0,
)


@pytest.fixture(scope="module")
def scaled_run():
    return run_benchmark(SCALED, progress=True)


def test_5_scaled_quantile_metrics(scaled_run, acceptance):
    summ = scaled_run.quantile_metrics().summary()
    checks = []
    for ai, a in enumerate(SCALED.alphas):
        for scheme in ("original", "bootstrap"):
            ref = REFERENCE_QUANTILE[a][scheme][0]
            got = float(summ[scheme]["M_RMSE"][ai])
            checks.append((f"M_RMSE a={a} {scheme} {got:.4f} vs {ref} ({(got - ref) / ref:+.1%})",
                           abs(got - ref) <= 0.15 * ref))
        bb, bo = summ["bootstrap"]["M_Bias"][ai], summ["original"]["M_Bias"][ai]
        checks.append((f"M_Bias a={a} bootstrap {bb:.4f} < original {bo:.4f}", bb < bo))
        vo, vb = summ["original"]["M_Variance"][ai], summ["bootstrap"]["M_Variance"][ai]
        checks.append((f"M_Variance a={a} original {vo:.4f} < bootstrap {vb:.4f}", vo < vb))
    for text, ok in checks:
        acceptance("5", ok, text)
    # diagnostic only: squared bias with the replication noise var/s removed
    qhat = scaled_run.qhat
    s = qhat.shape[0]
    qtrue = true_quantile(scaled_run.queries[:, None, :], np.asarray(SCALED.alphas)[None, :])
    b2 = ((qhat.mean(axis=0) - qtrue[None]) ** 2 - qhat.var(axis=0, ddof=1) / s).mean(axis=1)
    for ai, a in enumerate(SCALED.alphas):
        ACCEPTANCE_LINES.append(
            f"[INFO] criterion 5: a={a} noise-corrected mean squared bias "
            f"bootstrap {b2[0, ai]:.4f} vs original {b2[1, ai]:.4f}"
        )
    failed = [t for t, ok in checks if not ok]
    acceptance(5, not failed, f"overall: {len(checks) - len(failed)}/{len(checks)} checks hold")
    assert not failed, failed


def test_6_scaled_ks(scaled_run, acceptance):
    mks = scaled_run.m_ks()
    in_band = all(0.10 <= v <= 0.17 for v in mks.values())
    close = abs(mks["original"] - mks["bootstrap"]) <= 0.02
    ok = in_band and close
    acceptance(6, ok, f"M_KS original={mks['original']:.4f} (reference {REFERENCE_M_KS['original']}), "
                      f"bootstrap={mks['bootstrap']:.4f} (reference {REFERENCE_M_KS['bootstrap']}); band [0.10, 0.17], gap <= 0.02")
    assert ok


def test_7_consistency_trend(acceptance):
    means = []
    for n in (500, 2000, 8000):
        cfg = BenchmarkConfig(n=n, n_trees=200, replications=20, queries=((1.0, 2.0, 1.0),),
                              alphas=(0.5,), schemes=("bootstrap", "original"), seed=70)
        means.append(run_benchmark(cfg).ks.mean(axis=(0, 2)))
    means = np.array(means)  # (sizes, schemes)
    ok = True
    details = []
    for si, scheme in enumerate(("bootstrap", "original")):
        seq = means[:, si]
        violations = [(a, b) for a, b in zip(seq, seq[1:]) if b >= a]
        scheme_ok = len(violations) <= 1 and all((b - a) / a <= 0.10 for a, b in violations)
        scheme_ok &= seq[-1] < seq[0]
        ok &= scheme_ok
        details.append(f"{scheme} " + " > ".join(f"{v:.4f}" for v in seq))
    acceptance(7, ok, "mean KS at x=(1,2,1), n=500/2000/8000: " + "; ".join(details))
    assert ok


def _run(*args, cwd):
    return subprocess.run([sys.executable, "-m", "cdforest", *map(str, args)], cwd=cwd,
                          capture_output=True, text=True, check=True)


def test_8_cli_determinism(tmp_path, acceptance):
    outputs = {}
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        _run("sample", "--n", 200, "--seed", 5, "-o", "train.csv", cwd=d)
        _run("sample", "--n", 20, "--seed", 6, "-o", "q_full.csv", cwd=d)
        rows = (d / "q_full.csv").read_text().splitlines()
        (d / "q.csv").write_text("\n".join(",".join(r.split(",")[:3]) for r in rows) + "\n")
        fit_out = _run("fit", "train.csv", "--n-trees", 20, "--seed", 3, "-o", "model.cdf", cwd=d).stdout
        _run("predict-quantile", "model.cdf", "q.csv", "--alphas", "0.1,0.5,0.9", "--scheme", "bootstrap",
             "-o", "quantiles.csv", cwd=d)
        _run("predict-cdf", "model.cdf", "q.csv", "--y", "0,2.5,5,10", "-o", "cdf.csv", cwd=d)
        common = ["--n", 300, "--n-trees", 10, "--replications", 2, "--query-points", 5, "--seed", 9]
        _run("benchmark-cdf", *common, "--output-dir", "bc", cwd=d)
        _run("benchmark-quantile", *common, "--alphas", "0.25,0.75", "--output-dir", "bq", cwd=d)
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs[run] = {str(p.relative_to(d)): p.read_bytes() for p in files}
        outputs[run]["fit.stdout"] = fit_out.encode()
    same = outputs["a"] == outputs["b"]
    acceptance(8, same, f"{len(outputs['a'])} output files byte-identical across reruns: {same}")
    assert same
