"""Command-line interface: ``cdforest <command> ...``."""

from __future__ import annotations

import functools
import os
import sys

import click
import numpy as np

from .dataset import DatasetError, load_csv, read_matrix, save_csv, write_rows
from .forest import SCHEMES, ForestError, ForestHyperparameters, WeightedEcdf, fit
from .model_io import ModelFormatError, load_model, save_model
from .simbench import (
    BenchmarkConfig,
    BenchmarkError,
    ToyModelConfig,
    quantile_table,
    run_benchmark,
    sample_toy,
    write_cdf_outputs,
    write_quantile_outputs,
)
from .tree import TreeError

_ERRORS = (DatasetError, ForestError, ModelFormatError, BenchmarkError, TreeError, OSError)


def _reports_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _ERRORS as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _float_list(ctx, param, value):
    if value is None:
        return None
    try:
        out = tuple(float(v) for v in value.split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from None
    if not out:
        raise click.BadParameter("list is empty")
    return out


def _alpha_list(ctx, param, value):
    out = _float_list(ctx, param, value)
    if out is not None and not all(0 < a < 1 for a in out):
        raise click.BadParameter(f"every alpha must lie in (0, 1), got {value!r}")
    return out


def _response_column(value: str):
    return int(value) if value.lstrip("-").isdigit() else value


def _threads(value):
    return value or os.cpu_count() or 1


def _load_queries(path, has_header: bool, d: int) -> np.ndarray:
    _, X = read_matrix(path, has_header=has_header)
    if X.shape[1] != d:
        raise DatasetError(f"{path}: query row 0 has {X.shape[1]} columns, the model expects {d}")
    bad = np.flatnonzero(~np.isfinite(X).all(axis=1))
    if bad.size:
        raise DatasetError(f"{path}: query row {int(bad[0])} has a non-finite value")
    return X


def _emit(path, header, rows):
    if path is None or path == "-":
        click.echo(",".join(header))
        for row in rows:
            click.echo(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    else:
        write_rows(path, header, rows)


seed_option = click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True,
                           help="Single source of all randomness.")
threads_option = click.option("--threads", type=click.IntRange(min=1), default=None,
                              help="Worker threads (default: all cores). Results do not depend on it.")
header_option = click.option("--no-header", "no_header", is_flag=True, help="CSV files have no header row.")


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Conditional distribution forests: fit, query and benchmark."""


@main.command("fit")
@click.argument("train_csv", type=click.Path(dir_okay=False))
@click.option("--response-column", default="-1", show_default=True,
              help="Header name or 0-based index of the response column.")
@header_option
@click.option("--n-trees", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--max-features", type=click.IntRange(min=1), default=None, help="Default: all features.")
@click.option("--min-samples-leaf", type=click.IntRange(min=1), default=None,
              help="Minimum bootstrap draws per leaf. Default: floor(sqrt(n) ln(n)^1.5 / 250).")
@seed_option
@threads_option
@click.option("-o", "--output", "model_out", type=click.Path(dir_okay=False), required=True)
@_reports_errors
def cmd_fit(train_csv, response_column, no_header, n_trees, max_features, min_samples_leaf, seed, threads, model_out):
    """Grow a forest on TRAIN_CSV and write it to a model file."""
    ds = load_csv(train_csv, response_column=_response_column(response_column), has_header=not no_header)
    hp = ForestHyperparameters(n_trees, max_features, min_samples_leaf, seed).resolve(ds.n, ds.d)
    forest = fit(ds, hp, n_jobs=_threads(threads))
    save_model(forest, model_out)
    leaves = [t.n_leaves for t in forest.trees]
    click.echo(
        f"n={ds.n} d={ds.d} k={forest.k} max_features={hp.max_features} "
        f"min_samples_leaf={hp.min_samples_leaf} leaves(min/mean/max)="
        f"{min(leaves)}/{sum(leaves) / len(leaves):.1f}/{max(leaves)}"
    )


@main.command("predict-quantile")
@click.argument("model", type=click.Path(dir_okay=False))
@click.argument("query_csv", type=click.Path(dir_okay=False))
@click.option("--alphas", callback=_alpha_list, default="0.5", show_default=True)
@click.option("--scheme", type=click.Choice(SCHEMES), default="original", show_default=True)
@header_option
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Default: stdout.")
@_reports_errors
def cmd_predict_quantile(model, query_csv, alphas, scheme, no_header, output):
    """Conditional quantiles for every row of QUERY_CSV."""
    forest = load_model(model)
    X = _load_queries(query_csv, not no_header, forest.d)
    Q = forest.predict_quantiles(X, alphas, scheme)
    rows = [(q, float(a), scheme, float(Q[q, ai])) for q in range(X.shape[0]) for ai, a in enumerate(alphas)]
    _emit(output, ["query_id", "alpha", "scheme", "quantile"], rows)


@main.command("predict-cdf")
@click.argument("model", type=click.Path(dir_okay=False))
@click.argument("query_csv", type=click.Path(dir_okay=False))
@click.option("--y", "y_values", callback=_float_list, default=None,
              help="Comma-separated evaluation points. Default: every distinct training response.")
@click.option("--scheme", type=click.Choice(SCHEMES), default="original", show_default=True)
@header_option
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None, help="Default: stdout.")
@_reports_errors
def cmd_predict_cdf(model, query_csv, y_values, scheme, no_header, output):
    """Estimated conditional CDF for every row of QUERY_CSV."""
    forest = load_model(model)
    X = _load_queries(query_csv, not no_header, forest.d)
    W = forest.weight_matrix(X, scheme)
    rows = []
    for q in range(X.shape[0]):
        ecdf = WeightedEcdf.from_weights(forest.responses, W[q])
        if y_values is None:
            ys, cum = ecdf.jumps()
            rows.extend((q, scheme, float(y), float(c)) for y, c in zip(ys, cum))
        else:
            rows.extend((q, scheme, float(y), ecdf(y)) for y in y_values)
    _emit(output, ["query_id", "scheme", "y", "cdf"], rows)


def toy_options(fn):
    defaults = ToyModelConfig()
    for name in reversed(("gpd_scale", "gpd_shape", "lognormal_mu", "lognormal_sigma",
                          "gamma_shape", "gamma_scale", "noise_sigma")):
        fn = click.option(f"--{name.replace('_', '-')}", name, type=float,
                          default=getattr(defaults, name), show_default=True)(fn)
    return fn


@main.command("sample")
@click.option("--n", type=click.IntRange(min=1), required=True)
@seed_option
@toy_options
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
@_reports_errors
def cmd_sample(n, seed, output, **toy):
    """Draw n rows (x1, x2, x3, y) of the toy model."""
    ds = sample_toy(ToyModelConfig(seed=seed, **toy), n)
    save_csv(ds, output)


def benchmark_options(fn):
    opts = [
        click.option("--n", type=click.IntRange(min=1), default=10_000, show_default=True, help="Training size."),
        click.option("--n-trees", type=click.IntRange(min=1), default=500, show_default=True),
        click.option("--min-samples-leaf", type=click.IntRange(min=1), default=None,
                     help="Default: floor(sqrt(n) ln(n)^1.5 / 250)."),
        click.option("--max-features", type=click.IntRange(1, 3), default=None, help="Default: 3."),
        click.option("--replications", type=click.IntRange(min=1), default=500, show_default=True),
        click.option("--query-points", type=click.IntRange(min=1), default=50_000, show_default=True),
        click.option("--scheme", type=click.Choice(("both",) + SCHEMES), default="both", show_default=True),
        seed_option,
        threads_option,
        click.option("--output-dir", type=click.Path(file_okay=False), required=True),
        click.option("--progress", is_flag=True, help="Print a per-replication counter to stderr."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return toy_options(fn)


def _benchmark_config(n, n_trees, min_samples_leaf, max_features, replications, query_points,
                      scheme, seed, alphas, toy) -> BenchmarkConfig:
    return BenchmarkConfig(
        n=n,
        n_trees=n_trees,
        min_samples_leaf=min_samples_leaf,
        max_features=max_features,
        replications=replications,
        query_points=query_points,
        alphas=alphas,
        schemes=SCHEMES if scheme == "both" else (scheme,),
        seed=seed,
        toy=ToyModelConfig(seed=seed, **toy),
    )


@main.command("benchmark-cdf")
@benchmark_options
@_reports_errors
def cmd_benchmark_cdf(n, n_trees, min_samples_leaf, max_features, replications, query_points,
                      scheme, seed, threads, output_dir, progress, **toy):
    """Averaged Kolmogorov-Smirnov distance of the CDF estimators."""
    cfg = _benchmark_config(n, n_trees, min_samples_leaf, max_features, replications, query_points,
                            scheme, seed, (0.5,), toy)
    result = run_benchmark(cfg, n_jobs=_threads(threads), progress=progress)
    write_cdf_outputs(result, output_dir)
    click.echo("scheme,M_KS")
    for s, v in result.m_ks().items():
        click.echo(f"{s},{v:.4f}")


@main.command("benchmark-quantile")
@benchmark_options
@click.option("--alphas", callback=_alpha_list, default="0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", show_default=True)
@_reports_errors
def cmd_benchmark_quantile(n, n_trees, min_samples_leaf, max_features, replications, query_points,
                           scheme, seed, threads, output_dir, progress, alphas, **toy):
    """Averaged RMSE, bias and variance of the quantile estimators."""
    cfg = _benchmark_config(n, n_trees, min_samples_leaf, max_features, replications, query_points,
                            scheme, seed, alphas, toy)
    result = run_benchmark(cfg, n_jobs=_threads(threads), progress=progress)
    write_quantile_outputs(result, output_dir)
    header, rows = quantile_table(result.quantile_metrics())
    click.echo(",".join(header))
    for row in rows:
        click.echo(",".join(f"{v:.4f}" for v in row))


if __name__ == "__main__":
    sys.exit(main())
