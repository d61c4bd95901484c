"""Conditional distribution forests.

A fitted Forest turns a query point into a weight vector over the training
observations, either from the bootstrap multiplicities (``"bootstrap"``) or
from the original-sample leaf members (``"original"``).  The weighted
empirical CDF of the training responses under those weights estimates the
conditional distribution of Y given X = x.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from . import _kernels
from .dataset import Dataset
from .tree import Tree, TreeError, grow_tree

Scheme = Literal["bootstrap", "original"]
SCHEMES: tuple[str, ...] = ("bootstrap", "original")


class ForestError(ValueError):
    pass


def default_min_samples_leaf(n: int) -> int:
    """floor(sqrt(n) * ln(n)**1.5 / 250), at least 1."""
    if n < 1:
        raise ForestError(f"n must be >= 1, got {n}")
    return max(1, math.floor(math.sqrt(n) * math.log(n) ** 1.5 / 250))


@dataclass(frozen=True)
class ForestHyperparameters:
    """Growth settings.  ``None`` for max_features means all d features;
    ``None`` for min_samples_leaf means :func:`default_min_samples_leaf`.
    """

    n_trees: int = 100
    max_features: Optional[int] = None
    min_samples_leaf: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ForestError(f"n_trees must be a positive integer, got {self.n_trees}")
        if self.max_features is not None and self.max_features < 1:
            raise ForestError(f"max_features must be >= 1, got {self.max_features}")
        if self.min_samples_leaf is not None and self.min_samples_leaf < 1:
            raise ForestError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.seed < 0:
            raise ForestError(f"seed must be nonnegative, got {self.seed}")

    def resolve(self, n: int, d: int) -> "ForestHyperparameters":
        """Concrete settings for an n x d training set; raises if out of range."""
        mf = d if self.max_features is None else self.max_features
        msl = default_min_samples_leaf(n) if self.min_samples_leaf is None else self.min_samples_leaf
        if not 1 <= mf <= d:
            raise ForestError(f"max_features must be in [1, {d}], got {mf}")
        if not 1 <= msl <= n:
            raise ForestError(f"min_samples_leaf must be in [1, {n}], got {msl}")
        return ForestHyperparameters(self.n_trees, mf, msl, self.seed)


@dataclass(frozen=True, eq=False)
class WeightedEcdf:
    """Right-continuous step function sum_j w_j 1{Y_j <= y}."""

    sorted_responses: np.ndarray
    cum_weights: np.ndarray

    @classmethod
    def from_weights(cls, responses, weights) -> "WeightedEcdf":
        responses = np.asarray(responses, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if responses.shape != weights.shape or responses.ndim != 1 or responses.size == 0:
            raise ForestError("responses and weights must be nonempty vectors of equal length")
        order = np.argsort(responses, kind="stable")
        return cls(responses[order], np.cumsum(weights[order]))

    def __call__(self, y: float) -> float:
        return cdf_at(self, y)

    def quantile(self, alpha: float) -> float:
        return quantile(self, alpha)

    def jumps(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct response values and the CDF value at each (ties merged)."""
        y = self.sorted_responses
        last = np.r_[y[1:] != y[:-1], True]
        return y[last], self.cum_weights[last]


def cdf_at(ecdf: WeightedEcdf, y: float) -> float:
    """Estimated F(y | x); includes all mass tied at y."""
    if math.isnan(y):
        raise ForestError("cannot evaluate the CDF at NaN")
    i = int(np.searchsorted(ecdf.sorted_responses, y, side="right"))
    return 0.0 if i == 0 else float(ecdf.cum_weights[i - 1])


def _check_alpha(alpha) -> None:
    a = np.asarray(alpha, dtype=np.float64)
    if not np.all((a > 0) & (a < 1)):
        raise ForestError(f"alpha must lie in (0, 1), got {alpha}")


def quantile(ecdf: WeightedEcdf, alpha: float) -> float:
    """Smallest stored response whose cumulative weight reaches alpha."""
    _check_alpha(alpha)
    i = int(np.searchsorted(ecdf.cum_weights, alpha, side="left"))
    return float(ecdf.sorted_responses[min(i, ecdf.sorted_responses.size - 1)])


@dataclass(frozen=True, eq=False)
class Forest:
    trees: list[Tree]
    hp: ForestHyperparameters
    responses: np.ndarray = field(repr=False)
    n: int = 0
    d: int = 0

    def __post_init__(self):
        if len(self.trees) != self.hp.n_trees:
            raise ForestError(f"forest declares {self.hp.n_trees} trees but holds {len(self.trees)}")
        for t in self.trees:
            if t.n_features != self.d or t.bootstrap.shape[0] != self.n:
                raise ForestError("tree dimensions do not match the forest")

    @property
    def k(self) -> int:
        return len(self.trees)

    def _queries(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ForestError(f"queries must have {self.d} coordinates, got shape {X.shape}")
        bad = ~np.isfinite(X).all(axis=1)
        if bad.any():
            raise ForestError(f"query row {int(np.flatnonzero(bad)[0])} has a non-finite coordinate")
        return np.ascontiguousarray(X)

    def weight_matrix(self, X, scheme: Scheme = "original") -> np.ndarray:
        """(p, n) matrix whose row q is the weight vector of query X[q].

        Per-tree shares are added tree by tree and divided by k at the end.
        A leaf with a zero denominator contributes nothing (0/0 = 0); the
        row sums then fall short of 1 and are not renormalized.
        """
        if scheme not in SCHEMES:
            raise ForestError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        X = self._queries(X)
        W = np.zeros((X.shape[0], self.n))
        for t in self.trees:
            leaf_ids = t.apply(X)
            _kernels.accumulate(W, leaf_ids, t.leaf_offsets, t.leaf_members, _member_share(t, scheme))
        W /= self.k
        return W

    def tree_weights(self, x, scheme: Scheme = "original") -> np.ndarray:
        """(k, n) per-tree shares for one query, before averaging."""
        if scheme not in SCHEMES:
            raise ForestError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        X = self._queries(np.asarray(x, dtype=np.float64).reshape(1, -1))
        out = np.zeros((self.k, self.n))
        for i, t in enumerate(self.trees):
            _kernels.accumulate(out[i:i + 1], t.apply(X), t.leaf_offsets, t.leaf_members, _member_share(t, scheme))
        return out

    def weights(self, x, scheme: Scheme = "original") -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ForestError("a single query must be a vector")
        return self.weight_matrix(x, scheme)[0]

    def conditional_cdf(self, x, scheme: Scheme = "original") -> WeightedEcdf:
        return WeightedEcdf.from_weights(self.responses, self.weights(x, scheme))

    def predict_mean(self, X, scheme: Scheme = "original") -> np.ndarray:
        return self.weight_matrix(X, scheme) @ self.responses

    def predict_quantiles(self, X, alphas: Sequence[float], scheme: Scheme = "original") -> np.ndarray:
        """(p, len(alphas)) plug-in conditional quantiles."""
        _check_alpha(alphas)
        W = self.weight_matrix(X, scheme)
        return weighted_quantiles(self.responses, W, alphas)


def _member_share(tree: Tree, scheme: str) -> np.ndarray:
    """Per-member contribution B_j / N^b or 1 / N^o, laid out like leaf_members."""
    sizes = np.diff(tree.leaf_offsets)
    leaf_of_pos = np.repeat(np.arange(tree.n_leaves), sizes)
    if scheme == "bootstrap":
        num = tree.bootstrap[tree.leaf_members].astype(np.float64)
        den = tree.leaf_bootstrap_total[leaf_of_pos].astype(np.float64)
    else:
        num = np.ones(tree.leaf_members.shape[0])
        den = tree.leaf_original_count[leaf_of_pos].astype(np.float64)
    share = np.zeros_like(num)
    np.divide(num, den, out=share, where=den > 0)
    return share


def weighted_quantiles(responses: np.ndarray, W: np.ndarray, alphas: Sequence[float]) -> np.ndarray:
    """Plug-in quantiles for every row of a weight matrix."""
    alphas = np.asarray(alphas, dtype=np.float64)
    order = np.argsort(responses, kind="stable")
    ys = responses[order]
    cum = np.cumsum(W[:, order], axis=1)
    out = np.empty((W.shape[0], alphas.size))
    for q in range(W.shape[0]):
        idx = np.searchsorted(cum[q], alphas, side="left")
        out[q] = ys[np.minimum(idx, ys.size - 1)]
    return out


def fit(ds: Dataset, hp: ForestHyperparameters, n_jobs: Optional[int] = None) -> Forest:
    """Grow hp.n_trees trees; tree l draws from substream l of hp.seed.

    Trees are independent, so the result does not depend on `n_jobs`.
    """
    try:
        r = hp.resolve(ds.n, ds.d)
    except TreeError as exc:
        raise ForestError(str(exc)) from exc

    def one(ell: int) -> Tree:
        return grow_tree(ds, r.max_features, r.min_samples_leaf, seed=r.seed, stream=ell)

    n_jobs = n_jobs or os.cpu_count() or 1
    if n_jobs == 1 or hp.n_trees == 1:
        trees = [one(ell) for ell in range(hp.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(one, range(hp.n_trees)))
    return Forest(trees=trees, hp=r, responses=ds.responses, n=ds.n, d=ds.d)


def weights_bootstrap(f: Forest, x) -> np.ndarray:
    return f.weights(x, "bootstrap")


def weights_original(f: Forest, x) -> np.ndarray:
    return f.weights(x, "original")


def predict_mean(f: Forest, x, scheme: Scheme = "original") -> float:
    return float(f.predict_mean(np.asarray(x, dtype=np.float64)[None, :], scheme)[0])


def conditional_cdf(f: Forest, x, scheme: Scheme = "original") -> WeightedEcdf:
    return f.conditional_cdf(x, scheme)


def check_weights(w: np.ndarray, atol: float = 1e-9) -> list[str]:
    """Diagnostics for a weight vector; empty when it is a probability vector."""
    problems = []
    neg = np.flatnonzero(w < 0)
    if neg.size:
        problems.append(f"{neg.size} negative weight(s), first at index {int(neg[0])}")
    total = float(np.sum(w))
    if abs(total - 1.0) > atol:
        problems.append(f"weights sum to {total!r}, not 1")
    return problems
