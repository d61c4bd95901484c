import numpy as np
import pytest
from click.testing import CliRunner

from cdforest import ForestHyperparameters, fit, load_csv, load_model
from cdforest.cli import main
from cdforest.forest import WeightedEcdf, quantile


def invoke(*args):
    result = CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


@pytest.fixture
def train_csv(tmp_path):
    path = tmp_path / "train.csv"
    assert invoke("sample", "--n", 100, "--seed", 7, "-o", path).exit_code == 0
    return path


@pytest.fixture
def query_csv(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("x1,x2,x3\n1.0,2.0,1.0\n0.2,4.5,0.3\n")
    return path


def test_sample_writes_dataset(train_csv):
    ds = load_csv(train_csv)
    assert (ds.n, ds.d) == (100, 3)


def test_fit_report_and_determinism(tmp_path, train_csv):
    a, b = tmp_path / "a.cdf", tmp_path / "b.cdf"
    r1 = invoke("fit", train_csv, "--n-trees", 10, "--seed", 1, "-o", a)
    r2 = invoke("fit", train_csv, "--n-trees", 10, "--seed", 1, "--threads", 2, "-o", b)
    assert r1.exit_code == 0 and r2.exit_code == 0
    assert r1.output.startswith("n=100 d=3 k=10")
    assert a.read_bytes() == b.read_bytes()


def test_fit_rejects_zero_leaf_size(tmp_path, train_csv):
    r = invoke("fit", train_csv, "--min-samples-leaf", 0, "-o", tmp_path / "m.cdf")
    assert r.exit_code != 0
    assert not (tmp_path / "m.cdf").exists()


def test_fit_reports_bad_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,abc\n")
    r = invoke("fit", bad, "-o", tmp_path / "m.cdf")
    assert r.exit_code == 1
    assert "line 2, column 1" in r.output


def test_predict_matches_library(tmp_path, train_csv, query_csv):
    model = tmp_path / "m.cdf"
    invoke("fit", train_csv, "--n-trees", 10, "--seed", 1, "--min-samples-leaf", 3, "-o", model)
    out = tmp_path / "q_out.csv"
    r = invoke("predict-quantile", model, query_csv, "--alphas", ".1,.5,.9", "--scheme", "bootstrap", "-o", out)
    assert r.exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "query_id,alpha,scheme,quantile"
    assert len(lines) == 1 + 6
    got = np.array([float(l.split(",")[3]) for l in lines[1:]]).reshape(2, 3)
    assert (np.diff(got, axis=1) >= 0).all()

    ds = load_csv(train_csv)
    forest = fit(ds, ForestHyperparameters(n_trees=10, min_samples_leaf=3, seed=1))
    X = np.array([[1.0, 2.0, 1.0], [0.2, 4.5, 0.3]])
    np.testing.assert_array_equal(got, forest.predict_quantiles(X, [0.1, 0.5, 0.9], "bootstrap"))


def test_single_leaf_schemes(tmp_path, train_csv, query_csv):
    model = tmp_path / "m.cdf"
    invoke("fit", train_csv, "--n-trees", 1, "--min-samples-leaf", 100, "-o", model)
    forest = load_model(model)
    y = forest.responses
    values = {}
    for scheme in ("original", "bootstrap"):
        r = invoke("predict-quantile", model, query_csv, "--alphas", "0.5", "--scheme", scheme)
        values[scheme] = float(r.output.splitlines()[1].split(",")[3])
    # lower sample median: 50th order statistic of 100
    assert values["original"] == np.sort(y)[49]
    weighted = WeightedEcdf.from_weights(y, forest.trees[0].bootstrap / 100)
    assert values["bootstrap"] == quantile(weighted, 0.5)


def test_unknown_scheme(tmp_path, train_csv, query_csv):
    model = tmp_path / "m.cdf"
    invoke("fit", train_csv, "--n-trees", 2, "-o", model)
    r = invoke("predict-quantile", model, query_csv, "--scheme", "honest")
    assert r.exit_code == 2


def test_query_dimension_mismatch(tmp_path, train_csv):
    model = tmp_path / "m.cdf"
    invoke("fit", train_csv, "--n-trees", 2, "-o", model)
    q = tmp_path / "bad_q.csv"
    q.write_text("x1,x2\n1,2\n")
    r = invoke("predict-quantile", model, q)
    assert r.exit_code == 1 and "row 0" in r.output
    q.write_text("x1,x2,x3\n1,2,3\n1,2\n")
    r = invoke("predict-quantile", model, q)
    assert r.exit_code == 1 and "line 3" in r.output


def test_predict_cdf(tmp_path, train_csv, query_csv):
    model = tmp_path / "m.cdf"
    invoke("fit", train_csv, "--n-trees", 5, "-o", model)
    r = invoke("predict-cdf", model, query_csv, "--y", "-100,4,100")
    assert r.exit_code == 0
    rows = [l.split(",") for l in r.output.splitlines()[1:]]
    assert len(rows) == 6
    assert float(rows[0][3]) == 0.0 and float(rows[2][3]) == pytest.approx(1.0)
    full = invoke("predict-cdf", model, query_csv)
    cum = [float(l.split(",")[3]) for l in full.output.splitlines()[1:] if l.startswith("0,")]
    assert np.all(np.diff(cum) >= 0)


def test_benchmark_smoke(tmp_path):
    out = tmp_path / "bq"
    r = invoke("benchmark-quantile", "--n", 300, "--n-trees", 25, "--replications", 3,
               "--query-points", 10, "--alphas", "0.5", "--output-dir", out)
    assert r.exit_code == 0
    assert r.output.splitlines()[0] == "alpha,bootstrap_M_RMSE,bootstrap_M_Bias,bootstrap_M_Variance,original_M_RMSE,original_M_Bias,original_M_Variance"
    assert len(r.output.splitlines()) == 2
    summary = (out / "quantile_summary.csv").read_text().splitlines()
    assert len(summary) == 2 and summary[1].startswith("0.5,")

    r = invoke("benchmark-cdf", "--n", 300, "--n-trees", 25, "--replications", 3,
               "--query-points", 10, "--scheme", "original", "--output-dir", tmp_path / "bc")
    assert r.exit_code == 0
    assert r.output.splitlines()[1].startswith("original,")


def test_benchmark_rejects_bad_alpha(tmp_path):
    r = invoke("benchmark-quantile", "--alphas", "0,0.5", "--output-dir", tmp_path / "x")
    assert r.exit_code == 2
