import numpy as np
import pytest

from oblivion.trees import Ensemble, GenericTree, Node, ObliviousTree, str_to_code

# PASS/FAIL lines written by the acceptance tests
ACCEPTANCE: list[str] = []

STAIRCASE_VALUES = {"000": 0, "010": 1, "100": 2, "110": 4, "101": 4, "111": 5}


def random_tree(rng, depth, n_distinct, n_features=None, zero_prob=0.0, grid=None):
    """Random oblivious tree with exactly ``n_distinct`` features.

    Features are drawn from ``range(n_features)``. With ``grid`` the
    thresholds come from a small set, so repeated features may share one.
    """
    n_features = n_distinct if n_features is None else n_features
    pool = rng.choice(n_features, n_distinct, replace=False)
    feats = np.concatenate([pool, rng.choice(pool, depth - n_distinct)])
    rng.shuffle(feats)
    if grid is None:
        thr = rng.normal(0.0, 1.0, depth)
    else:
        thr = rng.choice(np.asarray(grid, dtype=float), depth)
    skeleton = ObliviousTree(feats, thr, rng.normal(0.0, 1.0, 1 << depth))
    p = np.zeros(skeleton.n_leaves)
    codes = skeleton.realizable
    p[codes] = rng.uniform(0.05, 1.0, codes.size)
    if zero_prob and codes.size > 1:
        p[codes[rng.uniform(size=codes.size) < zero_prob]] = 0.0
        if p.sum() == 0:
            p[codes[0]] = 1.0
    return skeleton.with_probabilities(p / p.sum())


def random_ensemble(rng, n_trees, n_features, max_depth=4, scale=1.0, bias=0.0):
    trees = []
    for _ in range(n_trees):
        depth = int(rng.integers(1, max_depth + 1))
        k = int(rng.integers(1, min(depth, n_features) + 1))
        trees.append(random_tree(rng, depth, k, n_features))
    return Ensemble(tuple(trees), n_features, scale, bias)


def random_generic_tree(rng, n_internal, n_features, thresholds=(-1.0, -0.5, 0.0, 0.5, 1.0)):
    """Random binary tree grown by splitting random leaves.

    ``thresholds`` is a shared pool or a dict of pools keyed by feature.
    """
    root = Node.leaf(rng.normal())
    leaves = [root]
    for _ in range(n_internal):
        node = leaves.pop(int(rng.integers(len(leaves))))
        node.feature = int(rng.integers(n_features))
        pool = thresholds[node.feature] if isinstance(thresholds, dict) else thresholds
        node.threshold = float(rng.choice(pool))
        node.left, node.right = Node.leaf(rng.normal()), Node.leaf(rng.normal())
        leaves += [node.left, node.right]
    return GenericTree(root)


def staircase(probabilities=None):
    values = np.zeros(8)
    for code, v in STAIRCASE_VALUES.items():
        values[str_to_code(code)] = v
    tree = ObliviousTree([0, 1, 0], [1.0, 1.0, 2.0], values)
    if probabilities is None:
        probabilities = np.zeros(8)
        probabilities[tree.realizable] = 1 / 6
    return tree.with_probabilities(probabilities)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def staircase_tree():
    return staircase()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
