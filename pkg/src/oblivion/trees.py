"""Oblivious trees, generic binary trees and ensembles.

Leaf codes are plain integers. Bit ``s`` of a code is the outcome of the
comparison at level ``s`` (level 0 is the root): it is 1 when
``x[feature] > threshold`` and 0 otherwise, so ties go to the lower branch.
The textual form of a code lists bits root first, so ``"110"`` is the
integer 3.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, InputShapeError

PROB_SUM_TOL = 1e-9


def code_to_str(code: int, depth: int) -> str:
    return "".join("1" if (code >> s) & 1 else "0" for s in range(depth))


def str_to_code(text: str) -> int:
    if not text or any(ch not in "01" for ch in text):
        raise InputShapeError(f"not a binary leaf code: {text!r}")
    return sum(1 << s for s, ch in enumerate(text) if ch == "1")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LevelPartition:
    """Levels grouped by the distinct feature they split on.

    ``groups[q]`` holds the level indices splitting on ``features[q]``;
    groups are ordered by first appearance from the root.
    """

    groups: tuple[tuple[int, ...], ...]
    features: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def depth(self) -> int:
        return sum(len(g) for g in self.groups)

    @cached_property
    def masks(self) -> tuple[int, ...]:
        """Bitmask of levels in each group."""
        return tuple(sum(1 << s for s in g) for g in self.groups)

    def group_of_feature(self, feature: int) -> int:
        return self.features.index(feature)


@dataclass(frozen=True, eq=False)
class ObliviousTree:
    features: np.ndarray
    thresholds: np.ndarray
    leaf_values: np.ndarray
    leaf_probabilities: np.ndarray | None = None

    def __post_init__(self):
        feats = _frozen_array(self.features, np.int64).reshape(-1)
        thr = _frozen_array(self.thresholds, np.float64).reshape(-1)
        if feats.size == 0:
            raise ConfigurationError("an oblivious tree needs at least one level")
        if feats.size != thr.size:
            raise InputShapeError("features and thresholds differ in length")
        if np.any(feats < 0):
            raise InputShapeError("negative feature index")
        if not np.all(np.isfinite(thr)):
            raise InputShapeError("thresholds must be finite")
        if feats.size > 30:
            raise ConfigurationError("depth above 30 is not supported")
        n_leaves = 1 << feats.size
        vals = _frozen_array(self.leaf_values, np.float64).reshape(-1)
        if vals.size != n_leaves:
            raise InputShapeError(f"expected {n_leaves} leaf values, got {vals.size}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "leaf_values", vals)
        if self.leaf_probabilities is not None:
            probs = _frozen_array(self.leaf_probabilities, np.float64).reshape(-1)
            if probs.size != n_leaves:
                raise InputShapeError(f"expected {n_leaves} leaf probabilities, got {probs.size}")
            if np.any(probs < 0) or np.any(probs > 1 + PROB_SUM_TOL):
                raise ConfigurationError("leaf probabilities must lie in [0, 1]")
            if np.any(probs[~self.realizable_mask] != 0):
                raise ConfigurationError("non-realizable leaves must have probability 0")
            if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
                raise ConfigurationError(f"leaf probabilities sum to {probs.sum():.12g}, not 1")
            object.__setattr__(self, "leaf_probabilities", probs)

    @property
    def depth(self) -> int:
        return int(self.features.size)

    @property
    def n_leaves(self) -> int:
        return 1 << self.depth

    @property
    def levels(self) -> list[tuple[int, float]]:
        return [(int(f), float(t)) for f, t in zip(self.features, self.thresholds)]

    @cached_property
    def partition(self) -> LevelPartition:
        order: dict[int, list[int]] = {}
        for s, f in enumerate(self.features.tolist()):
            order.setdefault(f, []).append(s)
        return LevelPartition(tuple(tuple(v) for v in order.values()), tuple(order))

    @cached_property
    def segments(self) -> tuple[tuple[int, ...], ...]:
        """Admissible bit patterns of each group, as masked codes."""
        out = []
        for levels in self.partition.groups:
            pats = []
            for bits in itertools.product((0, 1), repeat=len(levels)):
                lo, hi = -np.inf, np.inf
                for s, b in zip(levels, bits):
                    t = self.thresholds[s]
                    if b:
                        lo = max(lo, t)
                    else:
                        hi = min(hi, t)
                if lo < hi:
                    pats.append(sum(b << s for s, b in zip(levels, bits)))
            out.append(tuple(sorted(pats)))
        return tuple(out)

    @cached_property
    def realizable(self) -> np.ndarray:
        """Realizable codes in ascending order."""
        codes = np.zeros(1, dtype=np.int64)
        for pats in self.segments:
            codes = (codes[:, None] | np.array(pats, dtype=np.int64)[None, :]).reshape(-1)
        codes = np.sort(codes)
        codes.setflags(write=False)
        return codes

    @cached_property
    def realizable_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_leaves, dtype=bool)
        mask[self.realizable] = True
        mask.setflags(write=False)
        return mask

    def route(self, X) -> np.ndarray:
        """Leaf codes for each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] <= int(self.features.max()):
            raise InputShapeError(
                f"points have width {X.shape[1]} but the tree uses feature {int(self.features.max())}"
            )
        bits = X[:, self.features] > self.thresholds
        return bits.astype(np.int64) @ (np.int64(1) << np.arange(self.depth, dtype=np.int64))

    def predict(self, X) -> np.ndarray:
        return self.leaf_values[self.route(X)]

    def with_probabilities(self, probs) -> "ObliviousTree":
        return replace(self, leaf_probabilities=probs)

    def mean_value(self) -> float:
        if self.leaf_probabilities is None:
            raise ConfigurationError("leaf probabilities are not populated")
        return float(self.leaf_values @ self.leaf_probabilities)

    def cell_bounds(self, code: int) -> dict[int, tuple[float, float]]:
        """Interval ``(lo, hi]`` of each in-tree feature for a leaf code."""
        bounds = {}
        for levels, feat in zip(self.partition.groups, self.partition.features):
            lo, hi = -np.inf, np.inf
            for s in levels:
                t = float(self.thresholds[s])
                if (code >> s) & 1:
                    lo = max(lo, t)
                else:
                    hi = min(hi, t)
            bounds[feat] = (lo, hi)
        return bounds

    def representative_point(self, code: int, n_features: int | None = None) -> np.ndarray:
        """A point routed to ``code``; coordinates of unused features are 0."""
        if not self.realizable_mask[code]:
            raise DomainError(f"leaf {code_to_str(code, self.depth)} is not realizable")
        width = int(self.features.max()) + 1 if n_features is None else n_features
        x = np.zeros(width)
        for feat, (lo, hi) in self.cell_bounds(code).items():
            x[feat] = _inside(lo, hi)
        return x


def _inside(lo: float, hi: float) -> float:
    """A number in the half-open interval ``(lo, hi]``."""
    if np.isinf(lo) and np.isinf(hi):
        return 0.0
    if np.isinf(lo):
        return hi - 1.0
    if np.isinf(hi):
        return lo + 1.0
    mid = 0.5 * (lo + hi)
    return mid if lo < mid <= hi else hi


def route_to_leaf(tree: ObliviousTree, x) -> int:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return int(tree.route(x)[0])


def level_partition(tree: ObliviousTree) -> LevelPartition:
    return tree.partition


def realizable_codes(tree: ObliviousTree) -> set[int]:
    return set(tree.realizable.tolist())


@dataclass(frozen=True, eq=False)
class Dataset:
    rows: np.ndarray
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows[None, :] if rows.size else rows.reshape(0, 0)
        if rows.ndim != 2:
            raise InputShapeError("dataset rows must form a matrix")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.columns is not None:
            cols = tuple(self.columns)
            if len(cols) != rows.shape[1]:
                raise InputShapeError("column names do not match dataset width")
            object.__setattr__(self, "columns", cols)

    def __len__(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]


def as_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.rows
    X = np.asarray(data, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


def estimate_leaf_probabilities(tree: ObliviousTree, data) -> np.ndarray:
    X = as_matrix(data)
    if X.shape[0] == 0:
        raise ConfigurationError("cannot estimate probabilities from an empty dataset")
    counts = np.bincount(tree.route(X), minlength=tree.n_leaves)
    return counts / X.shape[0]


@dataclass(frozen=True, eq=False)
class Ensemble:
    trees: tuple[ObliviousTree, ...]
    n_features: int
    scale: float = 1.0
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if self.scale == 0:
            raise ConfigurationError("ensemble scale must be nonzero")
        for t in self.trees:
            if int(t.features.max()) >= self.n_features:
                raise InputShapeError(
                    f"tree uses feature {int(t.features.max())} but n_features={self.n_features}"
                )

    def _check(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.n_features:
            raise InputShapeError(f"expected width {self.n_features}, got {X.shape[1]}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(X.shape[0])
        for t in self.trees:
            total += t.predict(X)
        return self.scale * total + self.bias

    def mean_prediction(self) -> float:
        return self.scale * sum(t.mean_value() for t in self.trees) + self.bias

    def with_data(self, data) -> "Ensemble":
        """Copy with every tree's probabilities estimated from ``data``."""
        X = self._check(data)
        trees = tuple(t.with_probabilities(estimate_leaf_probabilities(t, X)) for t in self.trees)
        return replace(self, trees=trees)


def predict(ensemble: Ensemble, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputShapeError("predict takes a single point")
    return float(ensemble.predict(x)[0])


@dataclass(eq=False)
class Node:
    """A generic tree node: internal when ``left`` is set, otherwise a leaf."""

    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @classmethod
    def leaf(cls, value: float) -> "Node":
        return cls(value=float(value))

    @classmethod
    def split(cls, feature: int, threshold: float, left: "Node", right: "Node") -> "Node":
        return cls(feature=int(feature), threshold=float(threshold), left=left, right=right)


@dataclass(eq=False)
class GenericTree:
    root: Node

    def __post_init__(self):
        for node in self.nodes():
            if (node.left is None) != (node.right is None):
                raise ConfigurationError("internal nodes need exactly two children")

    def nodes(self) -> Iterable[Node]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.extend((node.right, node.left))

    def splits(self) -> list[tuple[int, float]]:
        return sorted({(n.feature, n.threshold) for n in self.nodes() if not n.is_leaf})

    @property
    def n_internal(self) -> int:
        return sum(not n.is_leaf for n in self.nodes())

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        out = np.empty(X.shape[0])

        def walk(node: Node, idx: np.ndarray):
            if idx.size == 0:
                return
            if node.is_leaf:
                out[idx] = node.value
                return
            go_right = X[idx, node.feature] > node.threshold
            walk(node.left, idx[~go_right])
            walk(node.right, idx[go_right])

        walk(self.root, np.arange(X.shape[0]))
        return out


@dataclass(frozen=True)
class GridCell:
    """One cell of the grid completion; ``bounds[f] = (lo, hi]``."""

    code: int
    bounds: dict = field(hash=False)


def obliviousize(tree: GenericTree) -> tuple[ObliviousTree, tuple[GridCell, ...]]:
    """Equivalent oblivious tree whose levels are every distinct split, sorted."""
    splits = tree.splits()
    if not splits:
        raise ConfigurationError("tree has no internal node")
    features = [f for f, _ in splits]
    thresholds = [t for _, t in splits]
    skeleton = ObliviousTree(features, thresholds, np.zeros(1 << len(splits)))
    codes = skeleton.realizable
    width = max(features) + 1
    points = np.array([skeleton.representative_point(int(c), width) for c in codes]).reshape(-1, width)
    values = np.zeros(skeleton.n_leaves)
    values[codes] = tree.predict(points)
    cells = tuple(GridCell(int(c), skeleton.cell_bounds(int(c))) for c in codes)
    return ObliviousTree(features, thresholds, values), cells


def as_generic(tree: ObliviousTree) -> GenericTree:
    """Expand an oblivious tree into an explicit binary tree."""

    def build(level: int, code: int) -> Node:
        if level == tree.depth:
            return Node.leaf(tree.leaf_values[code])
        f, t = int(tree.features[level]), float(tree.thresholds[level])
        return Node.split(f, t, build(level + 1, code), build(level + 1, code | (1 << level)))

    return GenericTree(build(0, 0))


def oblivious_from_levels(levels: Sequence[tuple[int, float]], leaf_values, leaf_probabilities=None):
    feats = [f for f, _ in levels]
    thr = [t for _, t in levels]
    return ObliviousTree(feats, thr, leaf_values, leaf_probabilities)
