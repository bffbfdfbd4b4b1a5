"""Synthetic benchmark data, estimator error checks and timing runs."""

from __future__ import annotations

import csv
import math
import timeit
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import AttributionTables, explain, precompute_ensemble, precompute_tree_table
from .errors import ConfigurationError
from .games import GameValueSpec
from .trees import Dataset, Ensemble, ObliviousTree, estimate_leaf_probabilities


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """Linear plus pairwise-interaction target on standard normal features.

    ``b`` is an ``n x n`` array whose strictly upper triangle holds the
    pairwise coefficients.
    """

    n: int
    a: np.ndarray
    b: np.ndarray
    noise_sd: float = 0.05
    seed: int = 0

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        b = np.triu(np.asarray(self.b, dtype=np.float64).reshape(self.n, self.n), k=1)
        if a.size != self.n:
            raise ConfigurationError("need one linear coefficient per feature")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be nonnegative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def random(cls, n: int = 40, noise_sd: float = 0.05, seed: int = 0) -> "SynthSpec":
        rng = np.random.default_rng(seed)
        a = rng.uniform(1.0, 5.0, n)
        b = np.triu(rng.uniform(-0.5, 0.5, (n, n)), k=1)
        return cls(n, a, b, noise_sd, seed)

    def target(self, X: np.ndarray) -> np.ndarray:
        return X @ self.a + np.einsum("ri,ij,rj->r", X, self.b, X)


def synth_dataset(spec: SynthSpec, rows: int) -> tuple[Dataset, np.ndarray]:
    if rows < 1:
        raise ConfigurationError("rows must be at least 1")
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((rows, spec.n))
    y = spec.target(X)
    if spec.noise_sd > 0:
        y = y + rng.normal(0.0, spec.noise_sd, rows)
    return Dataset(X), y


def synth_ensemble(data, targets, depth: int, n_trees: int, seed: int = 0,
                   learning_rate: float = 0.1, distinct: bool = True) -> Ensemble:
    """Randomized boosting: random splits, leaf values fitted to residuals.

    Thresholds are feature values of random training rows. With
    ``distinct`` each tree uses ``depth`` different features.
    """
    X = data.rows if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    resid = np.asarray(targets, dtype=np.float64) - np.mean(targets)
    n, width = X.shape
    if distinct and depth > width:
        raise ConfigurationError("depth exceeds the number of features")
    rng = np.random.default_rng(seed)
    weights = np.int64(1) << np.arange(depth, dtype=np.int64)
    trees = []
    for _ in range(n_trees):
        feats = rng.choice(width, depth, replace=not distinct)
        thr = X[rng.integers(0, n, depth), feats]
        codes = (X[:, feats] > thr).astype(np.int64) @ weights
        counts = np.bincount(codes, minlength=1 << depth)
        sums = np.bincount(codes, weights=resid, minlength=1 << depth)
        values = learning_rate * np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        resid -= values[codes]
        trees.append(ObliviousTree(feats, thr, values, counts / n))
    return Ensemble(tuple(trees), width, 1.0, float(np.mean(targets)))


@dataclass(frozen=True)
class ErrorBound:
    gini: float
    constant: float
    rhs: float


def gini_and_bound(tree: ObliviousTree, n_trees_with_feature: int, D_size: int) -> ErrorBound:
    """Sum of squared leaf probabilities and the resulting RMSE bound."""
    if tree.leaf_probabilities is None:
        raise ConfigurationError("leaf probabilities are not populated")
    codes = tree.realizable
    p = tree.leaf_probabilities[codes]
    gini = float(np.sum(p ** 2))
    k, m = tree.partition.k, tree.depth
    C = 4 * n_trees_with_feature * gini ** 0.25 * (1.5 / k * (1 + m / k) ** k) ** 0.25
    norm = math.sqrt(float(np.sum(tree.leaf_values[codes] ** 2)))
    return ErrorBound(gini, C, C / math.sqrt(D_size) * norm)


def crude_constant(n_trees: int, n_leaves: int) -> float:
    return 4 * n_trees * (3 * n_leaves / math.log2(n_leaves)) ** 0.25


def _normal_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x) / math.sqrt(2.0)))


def gaussian_cell_probabilities(tree: ObliviousTree) -> np.ndarray:
    """Leaf probabilities when every feature is an independent standard normal."""
    p = np.zeros(tree.n_leaves)
    for code in tree.realizable.tolist():
        prob = 1.0
        for lo, hi in tree.cell_bounds(code).values():
            prob *= float(_normal_cdf(hi) - _normal_cdf(lo))
        p[code] = prob
    return p / p.sum()


def scaling_tree(seed: int = 0, depth: int = 4, n_features: int = 3) -> ObliviousTree:
    """Small tree with thresholds near the centre of a standard normal."""
    rng = np.random.default_rng(seed)
    feats = np.concatenate([np.arange(n_features), rng.integers(0, n_features, max(depth - n_features, 0))])
    thr = rng.uniform(-1.0, 1.0, depth)
    tree = ObliviousTree(feats[:depth], thr, rng.uniform(-2.0, 2.0, 1 << depth))
    return tree.with_probabilities(gaussian_cell_probabilities(tree))


def sample_gaussian(tree: ObliviousTree, size: int, rng: np.random.Generator) -> np.ndarray:
    width = int(tree.features.max()) + 1
    return rng.standard_normal((size, width))


@dataclass(frozen=True)
class ScalingRow:
    size: int
    rmse: float
    max_entry_rmse: float
    bound: float


def error_scaling_experiment(tree: ObliviousTree, D_sizes: Sequence[int], repeats: int = 100,
                             seed: int = 0, spec: GameValueSpec | None = None) -> list[ScalingRow]:
    """RMSE of tables built from sampled probabilities against exact ones.

    Features are independent standard normals, so true leaf probabilities
    are products of per-feature interval masses.
    """
    spec = GameValueSpec.shapley() if spec is None else spec
    truth_tree = tree.with_probabilities(gaussian_cell_probabilities(tree))
    exact = precompute_tree_table(truth_tree, spec).rows
    rng = np.random.default_rng(seed)
    out = []
    for size in D_sizes:
        sq = np.zeros_like(exact)
        for _ in range(repeats):
            X = sample_gaussian(tree, size, rng)
            est = tree.with_probabilities(estimate_leaf_probabilities(tree, X))
            sq += (precompute_tree_table(est, spec).rows - exact) ** 2
        mse = sq / repeats
        bound = gini_and_bound(truth_tree, 1, size).rhs
        out.append(ScalingRow(size, float(np.sqrt(mse.mean())), float(np.sqrt(mse.max())), bound))
    return out


def loglog_slope(sizes, values) -> float:
    return float(np.polyfit(np.log10(sizes), np.log10(values), 1)[0])


def probability_variance_ratio(tree: ObliviousTree, size: int, trials: int = 200,
                               seed: int = 0) -> np.ndarray:
    """Sample variance of estimated leaf probabilities over the binomial formula."""
    p = gaussian_cell_probabilities(tree)
    rng = np.random.default_rng(seed)
    est = np.array([estimate_leaf_probabilities(tree, sample_gaussian(tree, size, rng))
                    for _ in range(trials)])
    codes = tree.realizable
    return est[:, codes].var(axis=0, ddof=1) / (p[codes] * (1 - p[codes]) / size)


@dataclass(frozen=True)
class TimingRow:
    depth: int
    precompute_per_tree: float
    explain_per_point: float


def timing_experiment(depths: Sequence[int], trees_per_ensemble: int = 100,
                      spec: GameValueSpec | None = None, runs: int = 5, timed_trees: int = 2,
                      points: int = 200, rows: int = 20000, seed: int = 0) -> list[TimingRow]:
    """Best-of-``runs`` wall-clock times of precompute per tree and explain per point.

    At each depth ``timed_trees`` trees are grown by randomized boosting and
    their precompute is timed; each run repeats the work until it takes at
    least 0.2 s, so fast shallow trees are not lost in timer noise, and runs
    cycle through the depths so slow drift in machine speed is shared. Explain
    is timed on a ``trees_per_ensemble``-tree ensemble that cycles through
    those trees and their tables, since lookup cost depends only on tree
    shape.
    """
    spec = GameValueSpec.shapley() if spec is None else spec
    if runs < 1 or timed_trees < 1:
        raise ConfigurationError("runs and timed_trees must be positive")
    data, y = synth_dataset(SynthSpec.random(seed=seed), rows)
    queries = data.rows[:points]
    # compile before the first measurement
    warm = data.rows[:, :2]
    precompute_ensemble(synth_ensemble(warm, y[:len(warm)], 2, 1, seed), spec, threads=1)
    precompute_timers, explain_timers = [], []
    for depth in depths:
        ens = synth_ensemble(data, y, depth, max(timed_trees, 1), seed + depth)
        timed = ens.trees[:timed_trees]
        tables = [precompute_tree_table(t, spec) for t in timed]
        precompute_timers.append(timeit.Timer(lambda timed=timed: [precompute_tree_table(t, spec) for t in timed]))
        cycle = [i % len(timed) for i in range(trees_per_ensemble)]
        big = Ensemble(tuple(timed[i] for i in cycle), ens.n_features, ens.scale, ens.bias)
        big_tables = AttributionTables(spec, tuple(tables[i] for i in cycle), ens.n_features)
        explain_timers.append(timeit.Timer(lambda big=big, tabs=big_tables: [explain(tabs, big, x) for x in queries]))
    # round-robin over depths so drift in machine speed hits every depth alike
    precompute_times = [np.inf] * len(depths)
    for _ in range(runs):
        for j, timer in enumerate(precompute_timers):
            number, took = timer.autorange()
            precompute_times[j] = min(precompute_times[j], took / number / timed_trees)
    explain_times = [np.inf] * len(depths)
    for _ in range(3 * runs):
        for j, timer in enumerate(explain_timers):
            explain_times[j] = min(explain_times[j], timer.timeit(1) / len(queries))
    return [TimingRow(d, p, e) for d, p, e in zip(depths, precompute_times, explain_times)]


def log2_growth(rows: Sequence[TimingRow]) -> list[float]:
    t = np.array([r.precompute_per_tree for r in rows])
    return np.diff(np.log2(t)).tolist()


def linear_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    return float(1 - resid.var() / y.var())


def write_timing_csv(rows: Sequence[TimingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["depth", "precompute_per_tree", "explain_per_point"])
        for r in rows:
            w.writerow([r.depth, repr(r.precompute_per_tree), repr(r.explain_per_point)])


def write_scaling_csv(rows: Sequence[ScalingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["size", "rmse", "max_entry_rmse", "bound"])
        for r in rows:
            w.writerow([r.size, repr(r.rmse), repr(r.max_entry_rmse), repr(r.bound)])
