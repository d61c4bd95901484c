"""CART regression trees grown on bootstrap samples.

Each tree keeps two occupancy records per leaf: the bootstrap multiplicity
total used while growing, and the original-sample members obtained by
routing every training row through the finished tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from . import _kernels
from .dataset import Dataset


class TreeError(ValueError):
    pass


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for substream `stream` of `seed`."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def draw_bootstrap(n: int, rng: np.random.Generator) -> np.ndarray:
    """Multiplicities of n uniform draws with replacement from range(n)."""
    if n < 1:
        raise TreeError(f"bootstrap needs n >= 1, got {n}")
    draws = rng.integers(0, n, size=n)
    return np.bincount(draws, minlength=n).astype(np.int64)


@dataclass(frozen=True)
class Split:
    """Axis-aligned cut: an observation goes left iff x[feature_index] < threshold."""

    feature_index: int
    threshold: float

    def goes_left(self, x) -> bool:
        return x[self.feature_index] < self.threshold


@dataclass(frozen=True)
class Leaf:
    node_id: int
    member_indices: np.ndarray
    bootstrap_count_total: int
    original_count: int


def best_split(
    ds: Dataset,
    node_members: Sequence[int],
    node_counts: Sequence[int],
    candidate_features: Sequence[int],
    min_samples_leaf: int = 1,
) -> Optional[Split]:
    """Bootstrap-weighted CART split of a single node.

    `node_counts[i]` is the bootstrap multiplicity of `node_members[i]`.
    Members with zero multiplicity do not take part.  Returns None when no
    cut leaves at least `min_samples_leaf` bootstrap draws on each side, or
    when the node's responses are constant.
    """
    members = np.asarray(node_members, dtype=np.int64)
    counts = np.zeros(ds.n, dtype=np.int64)
    counts[members] = np.asarray(node_counts, dtype=np.int64)
    present = members[counts[members] > 0]
    feats = np.sort(np.asarray(candidate_features, dtype=np.int64))
    f, t, _ = _kernels.find_split(ds.features, ds.responses, counts, present, feats, min_samples_leaf)
    if f < 0:
        return None
    return Split(int(f), float(t))


@dataclass(frozen=True, eq=False)
class Tree:
    """Flattened binary tree.

    Node arrays are indexed by node id, root = 0; `feature[i] == -1` marks a
    leaf.  Leaves are numbered in increasing node-id order and their
    original-sample members are stored CSR-style in
    ``leaf_members[leaf_offsets[l]:leaf_offsets[l + 1]]`` (sorted).
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    bootstrap: np.ndarray
    seed: int
    stream: int
    leaf_of_node: np.ndarray = field(repr=False)
    leaf_offsets: np.ndarray = field(repr=False)
    leaf_members: np.ndarray = field(repr=False)
    leaf_bootstrap_total: np.ndarray = field(repr=False)
    leaf_original_count: np.ndarray = field(repr=False)
    n_features: int = 0

    @classmethod
    def from_nodes(cls, feature, threshold, left, right, bootstrap, X, seed=0, stream=0) -> "Tree":
        """Attach leaf occupancy by routing every row of X through the nodes."""
        feature = np.ascontiguousarray(feature, dtype=np.int64)
        threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        left = np.ascontiguousarray(left, dtype=np.int64)
        right = np.ascontiguousarray(right, dtype=np.int64)
        bootstrap = np.ascontiguousarray(bootstrap, dtype=np.int64)
        is_leaf = feature < 0
        leaf_of_node = np.full(feature.shape[0], -1, dtype=np.int64)
        leaf_of_node[is_leaf] = np.arange(int(is_leaf.sum()))
        n_leaves = int(is_leaf.sum())

        node_of_row = _kernels.apply(feature, threshold, left, right, np.ascontiguousarray(X, dtype=np.float64))
        leaf_of_row = leaf_of_node[node_of_row]
        members = np.argsort(leaf_of_row, kind="stable").astype(np.int64)
        original_count = np.bincount(leaf_of_row, minlength=n_leaves).astype(np.int64)
        offsets = np.zeros(n_leaves + 1, dtype=np.int64)
        np.cumsum(original_count, out=offsets[1:])
        boot_total = np.bincount(leaf_of_row, weights=bootstrap, minlength=n_leaves).astype(np.int64)
        arrays = dict(
            feature=feature,
            threshold=threshold,
            left=left,
            right=right,
            bootstrap=bootstrap,
            leaf_of_node=leaf_of_node,
            leaf_offsets=offsets,
            leaf_members=members,
            leaf_bootstrap_total=boot_total,
            leaf_original_count=original_count,
        )
        for a in arrays.values():
            a.flags.writeable = False
        return cls(seed=int(seed), stream=int(stream), n_features=X.shape[1], **arrays)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return self.leaf_offsets.shape[0] - 1

    def split_at(self, node: int) -> Optional[Split]:
        if self.feature[node] < 0:
            return None
        return Split(int(self.feature[node]), float(self.threshold[node]))

    def splits(self) -> list[tuple[int, Split]]:
        """(node_id, Split) for every internal node in node-id order."""
        return [(i, self.split_at(i)) for i in range(self.n_nodes) if self.feature[i] >= 0]

    def leaf(self, leaf_index: int) -> Leaf:
        node = int(np.flatnonzero(self.leaf_of_node == leaf_index)[0])
        lo, hi = self.leaf_offsets[leaf_index], self.leaf_offsets[leaf_index + 1]
        return Leaf(
            node_id=node,
            member_indices=self.leaf_members[lo:hi],
            bootstrap_count_total=int(self.leaf_bootstrap_total[leaf_index]),
            original_count=int(self.leaf_original_count[leaf_index]),
        )

    def leaves(self) -> Iterator[Leaf]:
        for i in range(self.n_leaves):
            yield self.leaf(i)

    def apply(self, X) -> np.ndarray:
        """Leaf index (not node id) for every row of X."""
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.n_features:
            raise TreeError(f"expected {self.n_features} features, got {X.shape[1]}")
        return self.leaf_of_node[_kernels.apply(self.feature, self.threshold, self.left, self.right, X)]

    def same_structure(self, other: "Tree") -> bool:
        return (
            np.array_equal(self.feature, other.feature)
            and np.array_equal(self.threshold, other.threshold)
            and np.array_equal(self.left, other.left)
            and np.array_equal(self.right, other.right)
            and np.array_equal(self.bootstrap, other.bootstrap)
            and np.array_equal(self.leaf_members, other.leaf_members)
            and np.array_equal(self.leaf_offsets, other.leaf_offsets)
        )


def check_tree_params(n: int, d: int, max_features: int, min_samples_leaf: int) -> None:
    if not 1 <= max_features <= d:
        raise TreeError(f"max_features must be in [1, {d}], got {max_features}")
    if not 1 <= min_samples_leaf <= n:
        raise TreeError(f"min_samples_leaf must be in [1, {n}], got {min_samples_leaf}")


def grow_tree(
    ds: Dataset,
    max_features: int,
    min_samples_leaf: int,
    seed: int,
    stream: int = 0,
) -> Tree:
    """Grow a CART tree on a fresh bootstrap sample of `ds`.

    The bootstrap draw and every per-node feature draw come from the
    generator ``make_rng(seed, stream)``, so the result is a pure function
    of its arguments.  A node is split only when both children keep at
    least `min_samples_leaf` bootstrap draws.
    """
    check_tree_params(ds.n, ds.d, max_features, min_samples_leaf)
    rng = make_rng(seed, stream)
    counts = draw_bootstrap(ds.n, rng)
    feature, threshold, left, right = _kernels.grow(
        ds.features, ds.responses, counts, int(max_features), int(min_samples_leaf), rng
    )
    return Tree.from_nodes(feature, threshold, left, right, counts, ds.features, seed=seed, stream=stream)


def leaf_for(tree: Tree, x) -> Leaf:
    """The leaf whose cell contains x (ties on a threshold go right)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != tree.n_features:
        raise TreeError(f"query must have {tree.n_features} coordinates, got shape {x.shape}")
    if not all(math.isfinite(v) for v in x):
        raise TreeError("query has a non-finite coordinate")
    return tree.leaf(int(tree.apply(x[None, :])[0]))
