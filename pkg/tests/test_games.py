import itertools
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oblivion.errors import CapacityError, DomainError
from oblivion.games import (
    BANZHAF_FAMILY,
    SHAPLEY_FAMILY,
    CoefficientFamily,
    FeaturePartition,
    GameValueSpec,
    bits_of,
    check_players,
    coefficient,
    hockey_stick_direct,
    hockey_stick_sum,
    int_inc_sets,
    match_set,
    omega,
    owen_nested_weight,
    popcount,
    preimage,
    set_to_mask,
    submasks,
    validate_backward_pascal,
)
from oblivion.oracle import GameOracle, brute_force_value
from oblivion.trees import ObliviousTree, str_to_code

F = Fraction


def staircase_partition():
    return ObliviousTree([0, 1, 0], [1.0, 1.0, 2.0], np.zeros(8)).partition


def test_bit_helpers():
    assert popcount(0b1011) == 3
    assert bits_of(0b1010) == [1, 3]
    assert set_to_mask([0, 2]) == 0b101
    assert sorted(submasks(0b101)) == [0, 1, 4, 5]


@pytest.mark.parametrize("fam,s,n,expected", [
    (SHAPLEY_FAMILY, 0, 1, F(1)),
    (SHAPLEY_FAMILY, 1, 3, F(1, 6)),
    (BANZHAF_FAMILY, 0, 4, F(1, 8)),
    (BANZHAF_FAMILY, 3, 4, F(1, 8)),
])
def test_coefficient_examples(fam, s, n, expected):
    assert coefficient(fam, s, n) == expected


def test_coefficient_domain():
    with pytest.raises(DomainError):
        coefficient(SHAPLEY_FAMILY, 3, 3)


@pytest.mark.parametrize("n", range(1, 13))
def test_shapley_rows_sum_to_one(n):
    assert sum(comb(n - 1, s) * coefficient(SHAPLEY_FAMILY, s, n) for s in range(n)) == 1


def test_backward_pascal_examples():
    assert validate_backward_pascal(SHAPLEY_FAMILY, 12)
    assert validate_backward_pascal(BANZHAF_FAMILY, 12)
    rows = [[coefficient(SHAPLEY_FAMILY, s, n) for s in range(n)] for n in range(1, 5)]
    rows[1][0] += F(1, 10**6)
    assert not validate_backward_pascal(CoefficientFamily.custom(rows), 4)


@given(st.lists(st.fractions(min_value=0, max_value=1), min_size=1, max_size=7))
@settings(max_examples=50, deadline=None)
def test_families_grown_from_a_top_row_satisfy_backward_pascal(top):
    fam = CoefficientFamily.from_top_row(top)
    assert fam.n_max == len(top)
    assert validate_backward_pascal(fam, fam.n_max)


def test_custom_descriptor_round_trip():
    fam = CoefficientFamily.from_top_row([F(1, 3), F(1, 7), F(2, 5)])
    assert CoefficientFamily.from_descriptor(fam.descriptor()) == fam
    spec = GameValueSpec.coalitional(fam, SHAPLEY_FAMILY, FeaturePartition(((0, 1), (2,))))
    assert GameValueSpec.from_descriptor(spec.descriptor()) == spec


@pytest.mark.parametrize("fam,side,w,z,k,expected", [
    (SHAPLEY_FAMILY, "plus", 1, 1, 2, F(1, 2)),
    (SHAPLEY_FAMILY, "plus", 2, 1, 2, F(1)),
    (BANZHAF_FAMILY, "plus", 2, 1, 3, F(1, 2)),
    (BANZHAF_FAMILY, "minus", 2, 1, 3, F(1, 2)),
])
def test_omega_examples(fam, side, w, z, k, expected):
    assert omega(fam, side, w, z, k) == expected


def test_omega_domain():
    with pytest.raises(DomainError):
        omega(SHAPLEY_FAMILY, "plus", 1, 2, 3)
    with pytest.raises(DomainError):
        omega(SHAPLEY_FAMILY, "plus", 2, 0, 3)


@pytest.mark.parametrize("fam", [SHAPLEY_FAMILY, BANZHAF_FAMILY,
                                 CoefficientFamily.from_top_row([F(1, 9), F(1, 4), F(1, 5), F(1, 2), F(1, 3), F(1, 8)])])
@pytest.mark.parametrize("k", range(1, 7))
def test_omega_is_a_sum_of_coefficients_between_nested_sets(fam, k):
    """Plus weight sums over Z - i <= Q <= W - i, minus weight over Z <= Q <= W."""
    for w in range(k + 1):
        for z in range(w + 1):
            if z >= 1:
                direct = sum(comb(w - z, q - (z - 1)) * fam.alpha(q, k) for q in range(z - 1, w))
                assert omega(fam, "plus", w, z, k) == direct
            if w < k:
                direct = sum(comb(w - z, q - z) * fam.alpha(q, k) for q in range(z, w + 1))
                assert omega(fam, "minus", w, z, k) == direct


def test_hockey_stick_examples():
    assert hockey_stick_sum(0, 1, 3) == F(1, 2)
    assert hockey_stick_sum(2, 2, 5) == coefficient(SHAPLEY_FAMILY, 2, 5)
    for n in range(1, 8):
        assert hockey_stick_sum(0, n - 1, n) == F(1, 1) == hockey_stick_direct(0, n - 1, n)
    with pytest.raises(DomainError):
        hockey_stick_sum(0, 3, 3)


def test_hockey_stick_direct_up_to_ten():
    for n in range(1, 11):
        for w in range(n):
            for z in range(w + 1):
                assert hockey_stick_sum(z, w, n) == hockey_stick_direct(z, w, n)


def test_match_set_examples():
    part = staircase_partition()
    assert match_set(str_to_code("110"), str_to_code("100"), part) == 0b01
    assert match_set(5, 5, part) == 0b11
    singles = ObliviousTree([0, 1, 2], [0, 0, 0], np.zeros(8)).partition
    assert match_set(str_to_code("101"), str_to_code("010"), singles) == 0


def test_preimage_examples():
    part = staircase_partition()
    real = ObliviousTree([0, 1, 0], [1.0, 1.0, 2.0], np.zeros(8)).realizable
    assert preimage(str_to_code("110"), 0b01, part, real) == {str_to_code("100")}
    assert preimage(str_to_code("110"), 0b11, part, real) == {str_to_code("110")}
    singles = ObliviousTree([0, 1, 2], [0, 0, 0], np.zeros(8)).partition
    assert preimage(str_to_code("101"), 0, singles) == {str_to_code("010")}


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_preimage_size_before_realizability(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(1, 6))
    feats = rng.integers(0, 3, depth)
    part = ObliviousTree(feats, np.zeros(depth), np.zeros(1 << depth)).partition
    e = int(rng.integers(1 << depth))
    Q = int(rng.integers(1 << part.k))
    expected = np.prod([2 ** len(g) - 1 for q, g in enumerate(part.groups) if not (Q >> q) & 1])
    got = preimage(e, Q, part)
    assert len(got) == expected
    assert all(match_set(e, c, part) == Q for c in got)


def _owen_coefficient_sum(partition, i, Z, W):
    """Owen coefficients of player i summed over Z <= S <= W, enumerated directly."""
    blocks = partition.blocks
    j = partition.block_index(i)
    total = F(0)
    for R in range(1 << len(blocks)):
        if (R >> j) & 1:
            continue
        union = {x for r, b in enumerate(blocks) if (R >> r) & 1 for x in b}
        home_rest = [x for x in blocks[j] if x != i]
        for n in range(len(home_rest) + 1):
            for K in itertools.combinations(home_rest, n):
                S = union | set(K)
                if set(Z) - {i} <= S <= set(W) - {i}:
                    total += (coefficient(SHAPLEY_FAMILY, popcount(R), len(blocks))
                              * coefficient(SHAPLEY_FAMILY, n, len(blocks[j])))
    return total


def test_owen_weight_example_two_blocks():
    part = FeaturePartition(((1, 2), (3,)))
    assert owen_nested_weight(SHAPLEY_FAMILY, SHAPLEY_FAMILY, part, 1, {1}, {1, 2, 3}) == 1
    assert _owen_coefficient_sum(part, 1, {1}, {1, 2, 3}) == 1


def test_owen_weight_zero_when_a_touched_block_is_not_covered():
    part = FeaturePartition(((0,), (1, 2), (3,)))
    assert owen_nested_weight(SHAPLEY_FAMILY, SHAPLEY_FAMILY, part, 0, {1}, {0, 1, 3}) == 0


def test_owen_weight_singletons_reduce_to_hockey_stick():
    part = FeaturePartition.singletons(range(4))
    for Z in range(16):
        for W in submasks(15):
            if Z & W != Z or not Z & 1:
                continue
            z, w = popcount(Z) - 1, popcount(W) - 1
            got = owen_nested_weight(SHAPLEY_FAMILY, SHAPLEY_FAMILY, part, 0, bits_of(Z), bits_of(W))
            assert got == hockey_stick_sum(z, w, 4)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_owen_weight_matches_direct_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    labels = rng.integers(0, int(rng.integers(1, n + 1)), n)
    part = FeaturePartition(tuple(tuple(np.flatnonzero(labels == r).tolist())
                                  for r in np.unique(labels)))
    i = int(rng.integers(n))
    W = {x for x in range(n) if rng.uniform() < 0.7}
    Z = {x for x in W if rng.uniform() < 0.5}
    assert owen_nested_weight(SHAPLEY_FAMILY, SHAPLEY_FAMILY, part, i, Z, W) == \
        _owen_coefficient_sum(part, i, Z, W)


def test_int_inc_examples():
    part = FeaturePartition(((1, 2), (3,)))
    assert int_inc_sets(part, 0, {1}, set(), "int") == {frozenset({1})}
    assert int_inc_sets(part, 0, {1}, {1}, "int") == {frozenset({1, 3})}
    wide = FeaturePartition(((0,), (1, 2), (3, 4)))
    got = int_inc_sets(wide, 0, {0}, {1, 2}, "inc")
    assert got == {frozenset({0, 1, 2, 3, 4})}
    some = int_inc_sets(wide, 0, set(), {1}, "int")
    assert all(s & {1, 2} and not s & {3, 4} for s in some) and len(some) == 3


def test_capacity_limit():
    check_players(60)
    with pytest.raises(CapacityError):
        check_players(61)


def _random_game(rng, n, exact=True):
    vals = [F(int(v), 7) for v in rng.integers(-20, 21, 1 << n)] if exact else rng.normal(size=1 << n)
    return GameOracle(tuple(range(n)), lambda S: vals[S])


FAMILIES = [GameValueSpec.shapley(), GameValueSpec.banzhaf(),
            GameValueSpec.generic(CoefficientFamily.from_top_row([F(1, 5), F(1, 3), F(1, 4), F(2, 9), F(1, 6), F(1, 2)]))]


@pytest.mark.parametrize("spec", FAMILIES, ids=["shapley", "banzhaf", "custom"])
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
@settings(max_examples=20, deadline=None)
def test_axioms(spec, seed, n):
    rng = np.random.default_rng(seed)
    vals = [F(int(v), 7) for v in rng.integers(-20, 21, 1 << n)]
    # player n-1 is made null by copying values across its bit
    null = n - 1
    for S in range(1 << n):
        if (S >> null) & 1:
            vals[S] = vals[S ^ (1 << null)]
    game = GameOracle(tuple(range(n)), lambda S: vals[S])
    phi = brute_force_value(game, spec, exact=True)
    assert phi[null] == 0
    # linearity
    other = [F(int(v), 3) for v in rng.integers(-9, 10, 1 << n)]
    mix = GameOracle(tuple(range(n)), lambda S: vals[S] + 2 * other[S])
    phi2 = brute_force_value(GameOracle(tuple(range(n)), lambda S: other[S]), spec, exact=True)
    assert brute_force_value(mix, spec, exact=True) == [a + 2 * b for a, b in zip(phi, phi2)]
    # symmetry under a random relabelling
    perm = rng.permutation(n)

    def relabel(S):
        return sum(1 << int(perm[q]) for q in range(n) if (S >> q) & 1)

    permuted = GameOracle(tuple(range(n)), lambda S: vals[relabel(S)])
    phi_p = brute_force_value(permuted, spec, exact=True)
    assert [phi_p[q] for q in range(n)] == [phi[int(perm[q])] for q in range(n)]
    # carrier: dropping the null player leaves the others unchanged
    if n > 1:
        carrier = GameOracle(tuple(range(n - 1)), lambda S: vals[S])
        assert brute_force_value(carrier, spec, exact=True) == phi[:-1]


@given(st.integers(0, 10_000), st.integers(1, 7))
@settings(max_examples=30, deadline=None)
def test_shapley_efficiency_exact(seed, n):
    game = _random_game(np.random.default_rng(seed), n)
    phi = brute_force_value(game, GameValueSpec.shapley(), exact=True)
    assert sum(phi) == game.evaluate((1 << n) - 1) - game.evaluate(0)


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_two_players_shapley_equals_banzhaf(seed):
    game = _random_game(np.random.default_rng(seed), 2)
    assert brute_force_value(game, GameValueSpec.shapley(), exact=True) == \
        brute_force_value(game, GameValueSpec.banzhaf(), exact=True)
