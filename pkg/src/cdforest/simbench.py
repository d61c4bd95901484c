"""Monte-Carlo benchmark on the additive toy model.

    Y = X1 + X2 + X3 + eps,   X1 ~ GPD(scale 1.5, shape 0.25),
    X2 ~ LogNormal(1.1, 0.6), X3 ~ Gamma(shape 2, scale 0.6),
    eps ~ N(0, sigma^2) with sigma = 2.

The conditional law of Y given x is N(x1 + x2 + x3, sigma^2), which gives
exact CDF and quantile oracles for scoring forest estimates.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from . import __version__
from .dataset import Dataset, write_rows
from .forest import SCHEMES, ForestHyperparameters, WeightedEcdf, default_min_samples_leaf, fit


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class ToyModelConfig:
    gpd_scale: float = 1.5
    gpd_shape: float = 0.25
    lognormal_mu: float = 1.1
    lognormal_sigma: float = 0.6
    gamma_shape: float = 2.0
    gamma_scale: float = 0.6
    noise_sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gpd_scale", "gpd_shape", "lognormal_sigma", "gamma_shape", "gamma_scale", "noise_sigma"):
            if not getattr(self, name) > 0:
                raise BenchmarkError(f"{name} must be > 0, got {getattr(self, name)}")


def gpd_quantile(u, scale: float, shape: float):
    """Inverse CDF of the generalized Pareto law with location 0."""
    u = np.asarray(u, dtype=np.float64)
    return scale / shape * ((1.0 - u) ** (-shape) - 1.0)


def sample_inputs(cfg: ToyModelConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, 3) draws of (X1, X2, X3)."""
    x1 = gpd_quantile(rng.random(n), cfg.gpd_scale, cfg.gpd_shape)
    x2 = rng.lognormal(cfg.lognormal_mu, cfg.lognormal_sigma, n)
    x3 = rng.gamma(cfg.gamma_shape, cfg.gamma_scale, n)
    return np.column_stack([x1, x2, x3])


def sample_toy(cfg: ToyModelConfig, n: int, rng: Optional[np.random.Generator] = None) -> Dataset:
    """n i.i.d. rows of the toy model; seeded by cfg.seed unless rng is given."""
    if n < 1:
        raise BenchmarkError(f"sample size must be >= 1, got {n}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    X = sample_inputs(cfg, n, rng)
    y = X.sum(axis=1) + rng.normal(0.0, cfg.noise_sigma, n)
    return Dataset(X, y, feature_names=("x1", "x2", "x3"), response_name="y")


def true_cdf(x, y, sigma: float = 2.0):
    """F(y | x) = Phi((y - sum(x)) / sigma)."""
    loc = np.sum(np.asarray(x, dtype=np.float64), axis=-1)
    return ndtr((np.asarray(y, dtype=np.float64) - loc) / sigma)


def true_quantile(x, alpha, sigma: float = 2.0):
    alpha = np.asarray(alpha, dtype=np.float64)
    if not np.all((alpha > 0) & (alpha < 1)):
        raise BenchmarkError(f"alpha must lie in (0, 1), got {alpha}")
    loc = np.sum(np.asarray(x, dtype=np.float64), axis=-1)
    return loc + sigma * ndtri(alpha)


def ks_distance(ecdf: WeightedEcdf, x, sigma: float = 2.0) -> float:
    """sup_y |F_hat(y | x) - F(y | x)|, evaluated at both sides of every jump."""
    ys, cum = ecdf.jumps()
    F = true_cdf(x, ys, sigma)
    before = np.r_[0.0, cum[:-1]]
    return float(max(np.abs(cum - F).max(), np.abs(before - F).max()))


def ks_rows(sorted_y: np.ndarray, cum: np.ndarray, loc: np.ndarray, sigma: float) -> np.ndarray:
    """Row-wise KS distance for cumulative weights `cum` (p, n) over `sorted_y`."""
    last = np.r_[sorted_y[1:] != sorted_y[:-1], True]
    ys = sorted_y[last]
    c = cum[:, last]
    F = ndtr((ys[None, :] - loc[:, None]) / sigma)
    before = np.concatenate([np.zeros((c.shape[0], 1)), c[:, :-1]], axis=1)
    return np.maximum(np.abs(c - F).max(axis=1), np.abs(before - F).max(axis=1))


@dataclass(frozen=True)
class BenchmarkConfig:
    """Settings of a benchmark run.

    ``min_samples_leaf=None`` applies the sqrt(n) log(n)^1.5 / 250 rule;
    ``queries`` pins the query points instead of drawing ``query_points`` of
    them from the covariate law.
    """

    n: int = 10_000
    n_trees: int = 500
    min_samples_leaf: Optional[int] = None
    max_features: Optional[int] = None
    replications: int = 500
    query_points: int = 50_000
    alphas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    schemes: tuple[str, ...] = SCHEMES
    seed: int = 0
    toy: ToyModelConfig = field(default_factory=ToyModelConfig)
    queries: Optional[tuple[tuple[float, float, float], ...]] = None

    def __post_init__(self):
        if self.n < 1:
            raise BenchmarkError(f"n must be >= 1, got {self.n}")
        if self.n_trees < 1:
            raise BenchmarkError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.replications < 1:
            raise BenchmarkError(f"replications must be >= 1, got {self.replications}")
        if self.queries is None and self.query_points < 1:
            raise BenchmarkError(f"query_points must be >= 1, got {self.query_points}")
        if not self.alphas or not all(0 < a < 1 for a in self.alphas):
            raise BenchmarkError(f"alphas must be a nonempty list in (0, 1), got {self.alphas}")
        if not self.schemes or any(s not in SCHEMES for s in self.schemes):
            raise BenchmarkError(f"schemes must be drawn from {SCHEMES}, got {self.schemes}")
        if self.seed < 0:
            raise BenchmarkError(f"seed must be nonnegative, got {self.seed}")
        if self.queries is not None and any(len(q) != 3 for q in self.queries):
            raise BenchmarkError("every fixed query point needs 3 coordinates")
        msl = self.leaf_size
        if not 1 <= msl <= self.n:
            raise BenchmarkError(f"min_samples_leaf must be in [1, {self.n}], got {msl}")
        if self.max_features is not None and not 1 <= self.max_features <= 3:
            raise BenchmarkError(f"max_features must be in [1, 3], got {self.max_features}")

    @property
    def leaf_size(self) -> int:
        return default_min_samples_leaf(self.n) if self.min_samples_leaf is None else self.min_samples_leaf

    def to_dict(self) -> dict:
        d = asdict(self)
        d["resolved_min_samples_leaf"] = self.leaf_size
        return d


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def draw_queries(cfg: BenchmarkConfig) -> np.ndarray:
    if cfg.queries is not None:
        return np.asarray(cfg.queries, dtype=np.float64)
    return sample_inputs(cfg.toy, cfg.query_points, _stream(cfg.seed, 0))


def forest_seed(seed: int, replication: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(2, replication)).generate_state(1)[0])


def run_replication(cfg: BenchmarkConfig, r: int, queries: np.ndarray, n_jobs: int = 1):
    """One training sample and forest; returns (ks, qhat) per scheme.

    ks has shape (schemes, p); qhat has shape (schemes, p, alphas).
    """
    ds = sample_toy(cfg.toy, cfg.n, _stream(cfg.seed, 1, r))
    hp = ForestHyperparameters(cfg.n_trees, cfg.max_features, cfg.leaf_size, forest_seed(cfg.seed, r))
    forest = fit(ds, hp, n_jobs=n_jobs)
    order = np.argsort(ds.responses, kind="stable")
    ys = ds.responses[order]
    loc = queries.sum(axis=1)
    alphas = np.asarray(cfg.alphas)
    ks = np.empty((len(cfg.schemes), queries.shape[0]))
    qhat = np.empty((len(cfg.schemes), queries.shape[0], alphas.size))
    for si, scheme in enumerate(cfg.schemes):
        cum = np.cumsum(forest.weight_matrix(queries, scheme)[:, order], axis=1)
        ks[si] = ks_rows(ys, cum, loc, cfg.toy.noise_sigma)
        for q in range(queries.shape[0]):
            idx = np.searchsorted(cum[q], alphas, side="left")
            qhat[si, q] = ys[np.minimum(idx, ys.size - 1)]
    return ks, qhat


@dataclass
class QuantileMetrics:
    """Per-point metrics, shape (schemes, p, alphas), and their means over points."""

    schemes: tuple[str, ...]
    alphas: tuple[float, ...]
    rmse: np.ndarray
    bias: np.ndarray
    variance: np.ndarray

    @classmethod
    def from_estimates(cls, qhat: np.ndarray, qtrue: np.ndarray, schemes, alphas) -> "QuantileMetrics":
        """`qhat` is (s, schemes, p, alphas); `qtrue` is (p, alphas)."""
        err = qhat - qtrue[None, None]
        mean = qhat.mean(axis=0)
        return cls(
            tuple(schemes),
            tuple(alphas),
            rmse=np.sqrt(np.mean(err**2, axis=0)),
            bias=np.abs(mean - qtrue[None]),
            variance=np.mean((qhat - mean[None]) ** 2, axis=0),
        )

    def summary(self) -> dict[str, dict[str, np.ndarray]]:
        """{scheme: {"M_RMSE": (alphas,), "M_Bias": ..., "M_Variance": ...}}."""
        return {
            s: {
                "M_RMSE": self.rmse[i].mean(axis=0),
                "M_Bias": self.bias[i].mean(axis=0),
                "M_Variance": self.variance[i].mean(axis=0),
            }
            for i, s in enumerate(self.schemes)
        }


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    queries: np.ndarray
    ks: np.ndarray  # (s, schemes, p)
    qhat: np.ndarray  # (s, schemes, p, alphas)

    @property
    def ks_per_point(self) -> np.ndarray:
        """Mean KS over replications, shape (schemes, p)."""
        return self.ks.mean(axis=0)

    def m_ks(self) -> dict[str, float]:
        kp = self.ks_per_point
        return {s: float(kp[i].mean()) for i, s in enumerate(self.config.schemes)}

    def quantile_metrics(self) -> QuantileMetrics:
        cfg = self.config
        qtrue = true_quantile(self.queries[:, None, :], np.asarray(cfg.alphas)[None, :], cfg.toy.noise_sigma)
        return QuantileMetrics.from_estimates(self.qhat, qtrue, cfg.schemes, cfg.alphas)


def run_benchmark(
    cfg: BenchmarkConfig,
    n_jobs: Optional[int] = None,
    progress: bool = False,
) -> BenchmarkResult:
    """All replications of `cfg`.  Each replication draws from its own
    (seed, replication) substreams, so results ignore scheduling."""
    queries = draw_queries(cfg)
    n_jobs = n_jobs or os.cpu_count() or 1
    results = []
    if n_jobs == 1 or cfg.replications == 1:
        for r in range(cfg.replications):
            results.append(run_replication(cfg, r, queries, n_jobs=n_jobs))
            if progress:
                print(f"replication {r + 1}/{cfg.replications}", file=sys.stderr, flush=True)
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_replication, cfg, r, queries, 1) for r in range(cfg.replications)]
            for r, fut in enumerate(futures):
                results.append(fut.result())
                if progress:
                    print(f"replication {r + 1}/{cfg.replications}", file=sys.stderr, flush=True)
    ks = np.stack([k for k, _ in results])
    qhat = np.stack([q for _, q in results])
    return BenchmarkResult(cfg, queries, ks, qhat)


def run_cdf_benchmark(cfg: BenchmarkConfig, n_jobs: Optional[int] = None) -> dict[str, float]:
    return run_benchmark(cfg, n_jobs=n_jobs).m_ks()


def run_quantile_benchmark(cfg: BenchmarkConfig, n_jobs: Optional[int] = None) -> QuantileMetrics:
    return run_benchmark(cfg, n_jobs=n_jobs).quantile_metrics()


_METRICS = ("M_RMSE", "M_Bias", "M_Variance")


def quantile_table(metrics: QuantileMetrics) -> tuple[list[str], list[tuple]]:
    """Header and rows of the aggregate table, one row per alpha."""
    summ = metrics.summary()
    header = ["alpha"] + [f"{s}_{m}" for s in metrics.schemes for m in _METRICS]
    rows = []
    for ai, a in enumerate(metrics.alphas):
        rows.append((float(a), *(float(summ[s][m][ai]) for s in metrics.schemes for m in _METRICS)))
    return header, rows


def write_cdf_outputs(result: BenchmarkResult, outdir: str | os.PathLike) -> dict[str, str]:
    os.makedirs(outdir, exist_ok=True)
    cfg = result.config
    kp = result.ks_per_point
    paths = {
        "points": os.path.join(outdir, "ks_points.csv"),
        "summary": os.path.join(outdir, "ks_summary.csv"),
    }
    rows = [
        (q, *map(float, result.queries[q]), s, float(kp[si, q]))
        for si, s in enumerate(cfg.schemes)
        for q in range(result.queries.shape[0])
    ]
    write_rows(paths["points"], ["point_id", "x1", "x2", "x3", "scheme", "ks"], rows)
    write_rows(paths["summary"], ["scheme", "M_KS"], list(result.m_ks().items()))
    paths["manifest"] = _write_manifest(result, outdir, "cdf", paths)
    return paths


def write_quantile_outputs(result: BenchmarkResult, outdir: str | os.PathLike) -> dict[str, str]:
    os.makedirs(outdir, exist_ok=True)
    cfg = result.config
    m = result.quantile_metrics()
    paths = {
        "points": os.path.join(outdir, "quantile_points.csv"),
        "summary": os.path.join(outdir, "quantile_summary.csv"),
    }
    rows = [
        (q, *map(float, result.queries[q]), float(a), s,
         float(m.rmse[si, q, ai]), float(m.bias[si, q, ai]), float(m.variance[si, q, ai]))
        for q in range(result.queries.shape[0])
        for ai, a in enumerate(cfg.alphas)
        for si, s in enumerate(cfg.schemes)
    ]
    write_rows(paths["points"], ["point_id", "x1", "x2", "x3", "alpha", "scheme", "rmse", "bias", "variance"], rows)
    header, table = quantile_table(m)
    write_rows(paths["summary"], header, table)
    paths["manifest"] = _write_manifest(result, outdir, "quantile", paths)
    return paths


def _write_manifest(result: BenchmarkResult, outdir, kind: str, paths: dict) -> str:
    path = os.path.join(outdir, f"manifest_{kind}.json")
    manifest = {
        "kind": kind,
        "version": __version__,
        "config": result.config.to_dict(),
        "outputs": {k: os.path.basename(v) for k, v in paths.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
