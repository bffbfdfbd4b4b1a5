from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_ensemble, random_tree, staircase
from oblivion.engine import (
    AdditiveModel,
    TermCounter,
    explain,
    explain_additive,
    explain_batch,
    precompute_ensemble,
    precompute_tree_table,
    term_count_audit,
    thread_count,
)
from oblivion.errors import ConfigurationError, InputShapeError
from oblivion.games import CoefficientFamily, FeaturePartition, GameValueSpec
from oblivion.oracle import brute_force_table, empirical_marginal_game, brute_force_value
from oblivion.trees import Ensemble, ObliviousTree, str_to_code

SHAPLEY = GameValueSpec.shapley()
BANZHAF = GameValueSpec.banzhaf()


def test_staircase_row(staircase_tree):
    row = precompute_tree_table(staircase_tree, SHAPLEY).row(str_to_code("110"))
    assert row == pytest.approx([0.5, 5 / 6], abs=1e-14)
    row_b = precompute_tree_table(staircase_tree, BANZHAF).row(str_to_code("110"))
    assert row_b == pytest.approx([0.5, 5 / 6], abs=1e-14)


def test_staircase_explain(staircase_tree):
    ens = Ensemble((staircase_tree,), 2)
    phi = explain(precompute_ensemble(ens, SHAPLEY, threads=1), ens, [1.5, 1.5])
    assert phi == pytest.approx([0.5, 0.8333333333333334], abs=1e-14)


def test_table_rows_follow_code_order(rng):
    tree = random_tree(rng, 5, 3, grid=[-1.0, 0.0, 1.0])
    table = precompute_tree_table(tree, SHAPLEY)
    assert table.codes.tolist() == sorted(tree.realizable.tolist())
    assert table.rows.shape == (tree.realizable.size, tree.partition.k)
    assert table.features == tree.partition.features


def test_missing_probabilities():
    with pytest.raises(ConfigurationError):
        precompute_tree_table(ObliviousTree([0], [0.0], [1.0, 2.0]), SHAPLEY)


SPECS = {
    "shapley": SHAPLEY,
    "banzhaf": BANZHAF,
    "custom": GameValueSpec.generic(CoefficientFamily.from_top_row(
        [Fraction(1, 7), Fraction(2, 9), Fraction(1, 5), Fraction(1, 3), Fraction(3, 10), Fraction(1, 4)])),
}


@pytest.mark.parametrize("name", SPECS)
@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_tables_match_brute_force(name, seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 7))
    tree = random_tree(rng, depth, int(rng.integers(1, min(depth, 5) + 1)), zero_prob=0.2,
                       grid=[-1.0, 0.0, 1.0] if seed % 2 else None)
    got = precompute_tree_table(tree, SPECS[name]).rows
    ref = brute_force_table(tree, SPECS[name])
    assert np.allclose(got, ref, rtol=1e-10, atol=1e-12)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_owen_tables_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 7))
    k = int(rng.integers(1, min(depth, 5) + 1))
    tree = random_tree(rng, depth, k, n_features=6)
    labels = rng.integers(0, 3, 6)
    part = FeaturePartition(tuple(tuple(np.flatnonzero(labels == r).tolist()) for r in np.unique(labels)))
    spec = GameValueSpec.owen(part)
    assert np.allclose(precompute_tree_table(tree, spec).rows, brute_force_table(tree, spec),
                       rtol=1e-10, atol=1e-12)


def test_generic_coalitional_matches_brute_force(rng):
    outer = CoefficientFamily.from_top_row([Fraction(1, 3), Fraction(1, 5), Fraction(1, 2)])
    spec = GameValueSpec.coalitional(outer, GameValueSpec.banzhaf().family,
                                     FeaturePartition(((0, 1), (2,), (3, 4))))
    for _ in range(10):
        tree = random_tree(rng, 5, 4, n_features=5)
        assert np.allclose(precompute_tree_table(tree, spec).rows, brute_force_table(tree, spec),
                           rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("blocks", ["singletons", "one block"])
def test_owen_degenerates_to_shapley(rng, blocks):
    for _ in range(10):
        tree = random_tree(rng, 5, 4, n_features=4)
        part = (FeaturePartition.singletons(range(4)) if blocks == "singletons"
                else FeaturePartition(((0, 1, 2, 3),)))
        owen = precompute_tree_table(tree, GameValueSpec.owen(part)).rows
        shap = precompute_tree_table(tree, SHAPLEY).rows
        assert np.allclose(owen, shap, rtol=1e-12, atol=1e-13)


def test_partition_must_cover_ensemble_features(rng):
    ens = Ensemble((random_tree(rng, 3, 3, n_features=3),), 3)
    with pytest.raises(ConfigurationError):
        precompute_ensemble(ens, GameValueSpec.owen(FeaturePartition(((0, 1),))), threads=1)


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_efficiency_per_leaf(seed):
    rng = np.random.default_rng(seed)
    tree = random_tree(rng, 6, int(rng.integers(1, 5)))
    table = precompute_tree_table(tree, SHAPLEY)
    target = tree.leaf_values[table.codes] - tree.mean_value()
    assert np.allclose(table.rows.sum(axis=1), target, atol=1e-9)


def test_scale_and_copies(rng):
    tree = random_tree(rng, 4, 3)
    single = Ensemble((tree,), 3)
    scaled = Ensemble((tree,), 3, scale=2.0, bias=5.0)
    twice = Ensemble((tree, tree), 3)
    base = precompute_ensemble(single, SHAPLEY, threads=1)
    assert np.array_equal(precompute_ensemble(scaled, SHAPLEY, threads=1).trees[0].rows,
                          2 * base.trees[0].rows)
    x = rng.normal(size=3)
    assert np.allclose(explain(precompute_ensemble(twice, SHAPLEY, threads=1), twice, x),
                       2 * explain(base, single, x), rtol=0, atol=1e-15)


def test_null_feature_is_zero(rng):
    ens = random_ensemble(rng, 8, 7)
    ens = Ensemble(ens.trees, 9)
    tables = precompute_ensemble(ens, SHAPLEY, threads=2)
    phi = explain_batch(tables, ens, rng.normal(size=(20, 9)))
    assert np.all(phi[:, 7:] == 0.0)


def test_threads_give_identical_tables(rng, monkeypatch):
    ens = random_ensemble(rng, 12, 5, max_depth=5)
    one = precompute_ensemble(ens, SHAPLEY, threads=1)
    monkeypatch.setenv("OBLIVION_THREADS", "4")
    assert thread_count() == 4
    many = precompute_ensemble(ens, SHAPLEY)
    assert all(np.array_equal(a.rows, b.rows) for a, b in zip(one.trees, many.trees))
    monkeypatch.setenv("OBLIVION_THREADS", "zero")
    with pytest.raises(ConfigurationError):
        thread_count()


def test_explain_errors(rng, staircase_tree):
    ens = Ensemble((staircase_tree,), 2)
    tables = precompute_ensemble(ens, SHAPLEY, threads=1)
    with pytest.raises(InputShapeError):
        explain(tables, ens, [1.0, 2.0, 3.0])
    with pytest.raises(ConfigurationError):
        explain(tables, Ensemble((staircase_tree, staircase_tree), 2), [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        explain(None, ens, [1.0, 2.0])


def test_batch_agrees_with_single_point(rng):
    ens = random_ensemble(rng, 10, 4)
    tables = precompute_ensemble(ens, SHAPLEY, threads=1)
    X = rng.normal(size=(30, 4))
    batch = explain_batch(tables, ens, X)
    for x, row in zip(X, batch):
        assert np.allclose(explain(tables, ens, x), row, rtol=0, atol=1e-14)


def test_same_routes_give_identical_vectors(rng):
    ens = random_ensemble(rng, 10, 3)
    tables = precompute_ensemble(ens, SHAPLEY, threads=1)
    x = rng.normal(size=3)
    # nudge every coordinate without crossing any threshold
    thresholds = np.concatenate([t.thresholds for t in ens.trees])
    gap = np.min(np.abs(thresholds[None, :] - x[:, None]), axis=1)
    x2 = x + 0.5 * gap * np.sign(rng.normal(size=3))
    assert all(np.array_equal(t.route(x), t.route(x2)) for t in ens.trees)
    assert np.array_equal(explain(tables, ens, x), explain(tables, ens, x2))


def test_tables_agree_with_empirical_game_on_one_point_per_cell(rng):
    tree = random_tree(rng, 4, 2, grid=[-1.0, 0.0, 1.0])
    codes = tree.realizable
    counts = rng.integers(1, 5, codes.size)
    X = np.repeat(np.array([tree.representative_point(int(c)) for c in codes]), counts, axis=0)
    p = np.zeros(tree.n_leaves)
    p[codes] = counts / counts.sum()
    tree = tree.with_probabilities(p)
    table = precompute_tree_table(tree, SHAPLEY)
    for code in codes:
        x = tree.representative_point(int(code))
        emp = brute_force_value(empirical_marginal_game(tree.predict, X, x, tree.partition.features), SHAPLEY)
        assert np.allclose(table.row(int(code)), emp, atol=1e-12)


def test_additive_without_interactions():
    model = AdditiveModel(2, {0: np.square, 1: np.sin})
    D = np.array([[0.0, 0.0], [2.0, 1.0], [1.0, -1.0]])
    x = np.array([1.5, 0.3])
    phi = explain_additive(model, D, x)
    assert phi[0] == pytest.approx(1.5 ** 2 - np.mean(D[:, 0] ** 2))
    assert phi[1] == pytest.approx(np.sin(0.3) - np.mean(np.sin(D[:, 1])))


def test_additive_product_example():
    model = AdditiveModel(2, pairwise={(0, 1): lambda a, b: a * b})
    phi = explain_additive(model, np.array([[0.0, 0.0], [2.0, 2.0]]), np.array([1.0, 1.0]))
    assert phi == pytest.approx([-0.5, -0.5])


def test_additive_matches_brute_force(rng):
    model = AdditiveModel(3, {0: np.cos, 2: np.abs},
                          {(0, 1): lambda a, b: a * b ** 2, (1, 2): lambda a, b: np.maximum(a, b)})
    D = rng.normal(size=(12, 3))
    x = rng.normal(size=3)
    ref = brute_force_value(empirical_marginal_game(model, D, x), SHAPLEY)
    assert np.allclose(explain_additive(model, D, x), ref, atol=1e-12)


def test_additive_validation():
    with pytest.raises(ConfigurationError):
        AdditiveModel(3, pairwise={(2, 1): np.multiply})
    with pytest.raises(ConfigurationError):
        explain_additive(AdditiveModel(1, {0: np.abs}), np.zeros((0, 1)), np.zeros(1))


def test_audit_distinct_features():
    audit = term_count_audit(ObliviousTree([0, 1, 2], np.zeros(3), np.zeros(8)))
    assert audit.count == 18
    assert audit.plus == audit.minus == (9, 9, 9)


def test_audit_single_feature():
    audit = term_count_audit(ObliviousTree([0, 0, 0, 0], [0.0, 1.0, 2.0, 3.0], np.zeros(16)))
    assert max(audit.plus) <= 4 and max(audit.minus) <= 4 and audit.bound == 4


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_audit_matches_instrumented_counts(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 7))
    tree = random_tree(rng, depth, int(rng.integers(1, depth + 1)))
    counter = TermCounter()
    precompute_tree_table(tree, SHAPLEY, counter)
    audit = term_count_audit(tree)
    assert all(tuple(row) == audit.plus for row in counter.plus)
    assert all(tuple(row) == audit.minus for row in counter.minus)
    assert max(audit.plus) <= 3 ** (depth - 1) and max(audit.minus) <= 3 ** (depth - 1)
    assert max(audit.plus) <= audit.bound + 1e-9


def test_staircase_audit_numbers():
    audit = term_count_audit(staircase())
    assert audit.plus == (6, 5) and audit.minus == (6, 5)
