"""Per-leaf attribution tables for oblivious trees and their lookup."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .errors import CapacityError, ConfigurationError, InputShapeError
from .games import (
    INC,
    INT,
    FeaturePartition,
    GameValueSpec,
    check_players,
    int_inc_sets,
    omega_tables,
    set_to_mask,
    submasks,
)
from .trees import Ensemble, ObliviousTree, as_matrix

# Upper bound on entries of the per-tree leaf-sum array before refusing.
MAX_SUM_ENTRIES = 1 << 28


@dataclass(frozen=True, eq=False)
class TreeTable:
    """Attribution rows of one tree.

    ``rows[r]`` belongs to leaf ``codes[r]``; column ``q`` is the attribution
    of global feature ``features[q]``.
    """

    features: tuple[int, ...]
    codes: np.ndarray
    rows: np.ndarray
    depth: int

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        rows = np.asarray(self.rows, dtype=np.float64).reshape(codes.size, len(self.features))
        codes.setflags(write=False)
        rows.setflags(write=False)
        object.__setattr__(self, "codes", codes)
        object.__setattr__(self, "rows", rows)
        index = np.full(1 << self.depth, -1, dtype=np.int64)
        index[codes] = np.arange(codes.size)
        index.setflags(write=False)
        object.__setattr__(self, "index", index)

    def row(self, code: int) -> np.ndarray:
        r = self.index[code]
        if r < 0:
            raise ConfigurationError(f"no table row for leaf {code}")
        return self.rows[r]

    def scaled(self, factor: float) -> "TreeTable":
        return TreeTable(self.features, self.codes, self.rows * factor, self.depth)


@dataclass(frozen=True, eq=False)
class AttributionTables:
    game: GameValueSpec
    trees: tuple[TreeTable, ...]
    n_features: int


@dataclass
class TermCounter:
    """Filled by precompute: multiply-accumulate terms per (leaf row, feature)."""

    plus: np.ndarray | None = None
    minus: np.ndarray | None = None


def _tree_arrays(tree: ObliviousTree):
    if tree.leaf_probabilities is None:
        raise ConfigurationError("leaf probabilities are not populated")
    part = tree.partition
    check_players(part.k)
    codes = np.ascontiguousarray(tree.realizable, dtype=np.int64)
    if codes.size * (1 << part.k) > MAX_SUM_ENTRIES:
        raise CapacityError(f"tree with {codes.size} leaves and {part.k} features is too large")
    values = np.ascontiguousarray(tree.leaf_values[codes])
    probs = np.ascontiguousarray(tree.leaf_probabilities[codes])
    gmasks = np.array(part.masks, dtype=np.int64)
    return codes, values, probs, gmasks


@lru_cache(maxsize=None)
def _weights(family, k: int):
    plus, minus = omega_tables(family, k)
    return np.array(plus), np.array(minus)


def precompute_tree_table(tree: ObliviousTree, spec: GameValueSpec,
                          counter: TermCounter | None = None) -> TreeTable:
    codes, values, probs, gmasks = _tree_arrays(tree)
    part = tree.partition
    counting = counter is not None
    s, nu = _kernels.leaf_sums(codes, values, probs, gmasks, counting)
    if spec.is_coalitional:
        if counting:
            raise ConfigurationError("term counting covers non-coalitional values only")
        terms = _coalitional_terms(spec, part.features)
        rows = _kernels.coalitional_rows(codes, s, gmasks, *terms)
    else:
        wplus, wminus = _weights(spec.family, part.k)
        rows, plus_n, minus_n = _kernels.nested_rows(codes, s, nu, gmasks, wplus, wminus, counting)
        if counting:
            counter.plus, counter.minus = plus_n, minus_n
    return TreeTable(part.features, codes, rows, tree.depth)


def _coalitional_terms(spec: GameValueSpec, features: tuple[int, ...]):
    local = spec.partition.restrict(features)
    pos = {f: q for q, f in enumerate(features)}
    blocks = tuple(tuple(sorted(pos[f] for f in b)) for b in local.blocks)
    return _coalitional_term_arrays(spec.outer, spec.family, blocks, len(features))


@lru_cache(maxsize=256)
def _coalitional_term_arrays(outer, inner, blocks: tuple[tuple[int, ...], ...], k: int):
    """Flattened (feature, Z, W, coefficient) terms of the coalitional formula."""
    part = FeaturePartition(blocks)
    n_blocks = len(blocks)
    terms: dict[tuple[int, int, int], Fraction] = {}
    for i in range(k):
        j = part.block_index(i)
        home = set_to_mask(blocks[j])
        home_n = len(blocks[j])
        others = set_to_mask(r for r in range(n_blocks) if r != j)
        for Wc in submasks(others):
            for Zc in submasks(Wc):
                zc, wc = bin(Zc).count("1"), bin(Wc).count("1")
                c1 = outer.alpha(zc, n_blocks + zc - wc)
                block_z = [r for r in range(n_blocks) if (Zc >> r) & 1]
                block_w = [r for r in range(n_blocks) if (Wc >> r) & 1]
                for Ws in submasks(home):
                    for Zs in submasks(Ws):
                        zs, ws = bin(Zs).count("1"), bin(Ws).count("1")
                        if (Zs >> i) & 1:
                            c2 = inner.alpha(zs - 1, home_n + zs - ws)
                        elif not (Ws >> i) & 1:
                            c2 = -inner.alpha(zs, home_n + zs - ws)
                        else:
                            continue
                        zsets = int_inc_sets(part, j, _items(Zs), block_z, INT)
                        wsets = int_inc_sets(part, j, _items(Ws), block_w, INC)
                        for Z in zsets:
                            zm = set_to_mask(Z)
                            for W in wsets:
                                key = (i, zm, set_to_mask(W))
                                terms[key] = terms.get(key, Fraction(0)) + c1 * c2
    keys = sorted(k_ for k_, v in terms.items() if v != 0)
    feature = np.array([t[0] for t in keys], dtype=np.int64)
    zs_ = np.array([t[1] for t in keys], dtype=np.int64)
    ws_ = np.array([t[2] for t in keys], dtype=np.int64)
    coef = np.array([float(terms[t]) for t in keys], dtype=np.float64)
    return feature, zs_, ws_, coef


def _items(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if (mask >> i) & 1]


def thread_count() -> int:
    env = os.environ.get("OBLIVION_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"OBLIVION_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("OBLIVION_THREADS must be positive")
        return n
    return os.cpu_count() or 1


def precompute_ensemble(ensemble: Ensemble, spec: GameValueSpec,
                        threads: int | None = None) -> AttributionTables:
    threads = thread_count() if threads is None else threads
    for t in ensemble.trees:
        if t.leaf_probabilities is None:
            raise ConfigurationError("every tree needs leaf probabilities before precompute")
    if spec.is_coalitional:
        covered = {i for b in spec.partition.blocks for i in b}
        missing = {int(f) for t in ensemble.trees for f in t.features} - covered
        if missing:
            raise ConfigurationError(f"features {sorted(missing)} are in no partition block")

    def build(tree):
        return precompute_tree_table(tree, spec).scaled(ensemble.scale)

    if threads <= 1 or len(ensemble.trees) <= 1:
        tables = [build(t) for t in ensemble.trees]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tables = list(pool.map(build, ensemble.trees))
    return AttributionTables(spec, tuple(tables), ensemble.n_features)


def _check_tables(tables: AttributionTables, ensemble: Ensemble):
    if tables is None or len(tables.trees) != len(ensemble.trees):
        raise ConfigurationError("tables were not built for this ensemble")
    if tables.n_features != ensemble.n_features:
        raise ConfigurationError("tables and ensemble disagree on the feature count")


def explain(tables: AttributionTables, ensemble: Ensemble, x) -> np.ndarray:
    """Attribution vector of one point by per-tree table lookup."""
    _check_tables(tables, ensemble)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != ensemble.n_features:
        raise InputShapeError(f"expected width {ensemble.n_features}, got {x.size}")
    phi = np.zeros(ensemble.n_features)
    values = x.tolist()
    for tree, table in zip(ensemble.trees, tables.trees):
        code = 0
        for s, (f, t) in enumerate(zip(tree.features.tolist(), tree.thresholds.tolist())):
            if values[f] > t:
                code |= 1 << s
        row = table.rows[table.index[code]]
        for q, g in enumerate(table.features):
            phi[g] += row[q]
    return phi


def explain_batch(tables: AttributionTables, ensemble: Ensemble, X) -> np.ndarray:
    _check_tables(tables, ensemble)
    X = as_matrix(X)
    if X.shape[1] != ensemble.n_features:
        raise InputShapeError(f"expected width {ensemble.n_features}, got {X.shape[1]}")
    phi = np.zeros((X.shape[0], ensemble.n_features))
    for tree, table in zip(ensemble.trees, tables.trees):
        rows = table.rows[table.index[tree.route(X)]]
        phi[:, list(table.features)] += rows
    return phi


@dataclass
class AdditiveModel:
    """Sum of univariate and pairwise terms; callables take numpy arrays."""

    n_features: int
    univariate: Mapping[int, Callable] = field(default_factory=dict)
    pairwise: Mapping[tuple[int, int], Callable] = field(default_factory=dict)

    def __post_init__(self):
        for i, j in self.pairwise:
            if not i < j:
                raise ConfigurationError(f"interaction pair {(i, j)} must satisfy i < j")
        for i in list(self.univariate) + [v for p in self.pairwise for v in p]:
            if not 0 <= i < self.n_features:
                raise InputShapeError(f"term uses feature {i} outside the model")

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X)
        out = np.zeros(X.shape[0])
        for i, f in self.univariate.items():
            out += f(X[:, i])
        for (i, j), f in self.pairwise.items():
            out += f(X[:, i], X[:, j])
        return out


def explain_additive(model: AdditiveModel, background, x) -> np.ndarray:
    """Exact marginal Shapley values of an additive model with pairwise terms."""
    D = as_matrix(background)
    if D.shape[0] == 0:
        raise ConfigurationError("background dataset is empty")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != model.n_features or D.shape[1] != model.n_features:
        raise InputShapeError("point or background width differs from the model")
    phi = np.zeros(model.n_features)
    for i, f in model.univariate.items():
        phi[i] += f(np.array([x[i]]))[0] - f(D[:, i]).mean()
    for (i, j), f in model.pairwise.items():
        xi, xj = np.full(D.shape[0], x[i]), np.full(D.shape[0], x[j])
        own = f(np.array([x[i]]), np.array([x[j]]))[0] - f(D[:, i], D[:, j]).mean()
        mixed = f(xi, D[:, j]).mean() - f(D[:, i], xj).mean()
        phi[i] += 0.5 * own + 0.5 * mixed
        phi[j] += 0.5 * own - 0.5 * mixed
    return phi


@dataclass(frozen=True)
class TermCount:
    """Expanded product terms per feature on each side, and the worst-case bound."""

    plus: tuple[int, ...]
    minus: tuple[int, ...]
    bound: float

    @property
    def count(self) -> int:
        return max(p + m for p, m in zip(self.plus, self.minus))


def term_count_audit(tree: ObliviousTree) -> TermCount:
    """Number of (b, u) products one leaf row enumerates, per in-tree feature."""
    part = tree.partition
    k, m = part.k, tree.depth
    choices = [len(seg) - 1 for seg in tree.segments]
    full = (1 << k) - 1
    plus, minus = [0] * k, [0] * k
    for W in range(full + 1):
        for Z in submasks(W):
            free = full ^ (W ^ Z)
            n = 1
            for q in range(k):
                if (free >> q) & 1:
                    n *= choices[q]
            for i in range(k):
                if (Z >> i) & 1:
                    plus[i] += n
                if not (W >> i) & 1:
                    minus[i] += n
    bound = 3.0 ** (k - 1) * (m / k) ** k
    return TermCount(tuple(plus), tuple(minus), bound)
