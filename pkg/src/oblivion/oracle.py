"""Reference games and brute-force game values.

Everything here favours directness over speed and is capped at 20 players.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import CapacityError, ConfigurationError, DomainError, EvaluationError, InputShapeError
from .games import FeaturePartition, GameValueSpec, submasks
from .trees import Dataset, GenericTree, Node, ObliviousTree, as_generic, as_matrix

MAX_ORACLE_PLAYERS = 20


@dataclass(eq=False)
class GameOracle:
    """A set function on subsets of ``players``.

    Coalitions are bitmasks over positions in ``players``. Values are memoized.
    """

    players: tuple[int, ...]
    function: Callable[[int], float]
    _memo: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.players)

    def evaluate(self, coalition: int) -> float:
        if coalition < 0 or coalition >> self.n:
            raise DomainError(f"coalition {coalition} is not a subset of {self.n} players")
        if coalition not in self._memo:
            self._memo[coalition] = self.function(coalition)
        return self._memo[coalition]

    def __call__(self, members: Sequence[int]) -> float:
        """Value of the coalition given by player labels."""
        pos = {p: q for q, p in enumerate(self.players)}
        return self.evaluate(sum(1 << pos[p] for p in set(members)))

    def values(self) -> list:
        return [self.evaluate(S) for S in range(1 << self.n)]


def _predict_fn(model) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(model, "predict"):
        return model.predict
    if callable(model):
        return model
    raise ConfigurationError("model must be callable or expose predict")


def empirical_marginal_game(model, data, x, players: Sequence[int] | None = None) -> GameOracle:
    """Average over ``data`` of the model with coordinates in S taken from ``x``."""
    D = as_matrix(data)
    if D.shape[0] == 0:
        raise ConfigurationError("background dataset is empty")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if D.shape[1] != x.size:
        raise InputShapeError("point and background widths differ")
    players = tuple(range(x.size)) if players is None else tuple(players)
    f = _predict_fn(model)

    def value(S: int) -> float:
        spliced = D.copy()
        cols = [p for q, p in enumerate(players) if (S >> q) & 1]
        spliced[:, cols] = x[cols]
        return float(np.mean(f(spliced)))

    return GameOracle(players, value)


class _AgreementSums:
    """Shared per-tree sums for the closed-form game, filled lazily by coalition."""

    def __init__(self, tree: ObliviousTree):
        if tree.leaf_probabilities is None:
            raise ConfigurationError("leaf probabilities are not populated")
        self.tree = tree
        self.codes = tree.realizable.astype(np.int64)
        self.values = tree.leaf_values[self.codes]
        self.probs = tree.leaf_probabilities[self.codes]
        self.full_levels = tree.n_leaves - 1
        self.by_coalition: dict[int, np.ndarray] = {}

    def column(self, Q: int) -> np.ndarray:
        """``v_a(Q)`` for every realizable leaf ``a``."""
        if Q not in self.by_coalition:
            masks = self.tree.partition.masks
            on = sum(m for q, m in enumerate(masks) if (Q >> q) & 1)
            off = self.full_levels ^ on
            # probability mass of leaves u agreeing with b off the Q levels
            _, inv = np.unique(self.codes & off, return_inverse=True)
            mass = np.bincount(inv, weights=self.probs)[inv]
            # sum over b agreeing with the explicand leaf on the Q levels
            keys, inv2 = np.unique(self.codes & on, return_inverse=True)
            per_key = np.bincount(inv2, weights=self.values * mass)
            self.by_coalition[Q] = per_key[inv2]
        return self.by_coalition[Q]


_SUMS: "weakref.WeakKeyDictionary[ObliviousTree, _AgreementSums]" = weakref.WeakKeyDictionary()


def _sums_for(tree: ObliviousTree) -> _AgreementSums:
    sums = _SUMS.get(tree)
    if sums is None:
        sums = _SUMS[tree] = _AgreementSums(tree)
    return sums


def closed_form_marginal_game(tree: ObliviousTree, leaf: int) -> GameOracle:
    """Marginal game of a tree at a leaf, from leaf values and probabilities only.

    Players are the tree's distinct features in group order.
    """
    if not 0 <= leaf < tree.n_leaves or not tree.realizable_mask[leaf]:
        raise DomainError(f"leaf {leaf} is not realizable")
    sums = _sums_for(tree)
    row = int(np.searchsorted(sums.codes, leaf))
    return GameOracle(tree.partition.features, lambda Q: float(sums.column(Q)[row]))


def closed_form_game_matrix(tree: ObliviousTree) -> np.ndarray:
    """``V[r, Q]`` = closed-form game value at realizable leaf ``r`` on coalition ``Q``."""
    sums = _sums_for(tree)
    return np.stack([sums.column(Q) for Q in range(1 << tree.partition.k)], axis=1)


def _check_size(n: int):
    if n > MAX_ORACLE_PLAYERS:
        raise CapacityError(f"brute force is capped at {MAX_ORACLE_PLAYERS} players, got {n}")


def _local_blocks(spec: GameValueSpec, players: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    """Blocks of the induced partition as positions in ``players``."""
    listed = {i for b in spec.partition.blocks for i in b}
    extra = [(p,) for p in players if p not in listed]
    part = FeaturePartition(spec.partition.blocks + tuple(extra)).restrict(players)
    pos = {p: q for q, p in enumerate(players)}
    return tuple(tuple(pos[p] for p in b) for b in part.blocks)


@lru_cache(maxsize=128)
def coefficient_terms(spec: GameValueSpec, n: int,
                      blocks: tuple[tuple[int, ...], ...] | None = None) -> tuple:
    """For each player i, the list of (S, coefficient) with S not containing i.

    The value of player i is the sum of coefficient * (v(S + i) - v(S)).
    """
    _check_size(n)
    out = []
    if not spec.is_coalitional:
        fam = spec.family
        for i in range(n):
            rest = ((1 << n) - 1) ^ (1 << i)
            out.append(tuple((S, fam.alpha(bin(S).count("1"), n)) for S in submasks(rest)))
        return tuple(out)
    masks = [sum(1 << q for q in b) for b in blocks]
    n_blocks = len(blocks)
    for i in range(n):
        j = next(r for r, b in enumerate(blocks) if i in b)
        other_blocks = [r for r in range(n_blocks) if r != j]
        terms = []
        for R in range(1 << len(other_blocks)):
            chosen = [other_blocks[t] for t in range(len(other_blocks)) if (R >> t) & 1]
            Q = sum(masks[r] for r in chosen)
            a1 = spec.outer.alpha(len(chosen), n_blocks)
            for K in submasks(masks[j] ^ (1 << i)):
                a2 = spec.family.alpha(bin(K).count("1"), len(blocks[j]))
                terms.append((Q | K, a1 * a2))
        out.append(tuple(terms))
    return tuple(out)


def brute_force_value(game: GameOracle, spec: GameValueSpec, exact: bool = False):
    """Game value by direct summation over coalitions.

    With ``exact=True`` the game must return rationals and the result is a
    list of ``Fraction``; otherwise a float array.
    """
    n = game.n
    _check_size(n)
    blocks = _local_blocks(spec, game.players) if spec.is_coalitional else None
    terms = coefficient_terms(spec, n, blocks)
    if exact:
        out = []
        for i in range(n):
            bit = 1 << i
            total = Fraction(0)
            for S, c in terms[i]:
                total += c * (Fraction(game.evaluate(S | bit)) - Fraction(game.evaluate(S)))
            out.append(total)
        return out
    v = np.array(game.values(), dtype=np.float64)
    return coefficient_matrix(spec, n, blocks) @ v


@lru_cache(maxsize=128)
def coefficient_matrix(spec: GameValueSpec, n: int, blocks=None) -> np.ndarray:
    """Matrix ``M`` with value vector ``M @ v`` for a game listed by coalition."""
    terms = coefficient_terms(spec, n, blocks)
    M = np.zeros((n, 1 << n))
    for i in range(n):
        bit = 1 << i
        for S, c in terms[i]:
            M[i, S | bit] += float(c)
            M[i, S] -= float(c)
    M.setflags(write=False)
    return M


def brute_force_table(tree: ObliviousTree, spec: GameValueSpec) -> np.ndarray:
    """Brute-force value at every realizable leaf of the closed-form game."""
    players = tree.partition.features
    blocks = _local_blocks(spec, players) if spec.is_coalitional else None
    M = coefficient_matrix(spec, len(players), blocks)
    return closed_form_game_matrix(tree) @ M.T


def _node_counts(tree: GenericTree, X: np.ndarray) -> dict[int, int]:
    counts: dict[int, int] = {}

    def walk(node: Node, idx: np.ndarray):
        counts[id(node)] = idx.size
        if node.is_leaf:
            return
        right = X[idx, node.feature] > node.threshold
        walk(node.left, idx[~right])
        walk(node.right, idx[right])

    walk(tree.root, np.arange(X.shape[0]))
    return counts


def _tree_players(tree: GenericTree) -> tuple[int, ...]:
    return tuple(sorted({n.feature for n in tree.nodes() if not n.is_leaf}))


def _coerce_tree(tree) -> GenericTree:
    return as_generic(tree) if isinstance(tree, ObliviousTree) else tree


def path_dependent_game(tree, data, x, players: Sequence[int] | None = None) -> GameOracle:
    """Recursive game that weights unfollowed branches by data proportions."""
    tree = _coerce_tree(tree)
    X = as_matrix(data)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    counts = _node_counts(tree, X)
    players = _tree_players(tree) if players is None else tuple(players)
    pos = {p: q for q, p in enumerate(players)}

    def value(S: int) -> float:
        def rec(node: Node) -> float:
            if node.is_leaf:
                return node.value
            q = pos.get(node.feature)
            if q is not None and (S >> q) & 1:
                return rec(node.right if x[node.feature] > node.threshold else node.left)
            total = counts[id(node)]
            if total == 0:
                raise EvaluationError("a node without data coverage needs averaging")
            out = 0.0
            for child in (node.left, node.right):
                if counts[id(child)]:
                    out += counts[id(child)] / total * rec(child)
            return out

        return rec(tree.root)

    return GameOracle(players, value)


def eject_game(tree, data, x, players: Sequence[int] | None = None) -> GameOracle:
    """Recursive game that stops at the first split on an absent feature."""
    tree = _coerce_tree(tree)
    X = as_matrix(data)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    counts = _node_counts(tree, X)
    node_value: dict[int, float] = {}

    def average(node: Node) -> float:
        if node.is_leaf:
            return node.value
        if id(node) not in node_value:
            total = counts[id(node)]
            if total == 0:
                raise EvaluationError("a node without data coverage has no value")
            node_value[id(node)] = sum(
                counts[id(c)] / total * average(c) for c in (node.left, node.right) if counts[id(c)]
            )
        return node_value[id(node)]

    players = _tree_players(tree) if players is None else tuple(players)
    pos = {p: q for q, p in enumerate(players)}

    def value(S: int) -> float:
        node = tree.root
        while not node.is_leaf:
            q = pos.get(node.feature)
            if q is None or not (S >> q) & 1:
                return average(node)
            node = node.right if x[node.feature] > node.threshold else node.left
        return node.value

    return GameOracle(players, value)


@dataclass(frozen=True)
class OneHotEncoding:
    """Per original feature, ``None`` for numeric or the list of category codes."""

    categories: tuple

    @property
    def n_original(self) -> int:
        return len(self.categories)

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        out, start = [], 0
        for cats in self.categories:
            width = 1 if cats is None else len(cats)
            out.append(tuple(range(start, start + width)))
            start += width
        return tuple(out)

    @property
    def n_encoded(self) -> int:
        return sum(len(b) for b in self.blocks)

    def encode(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.n_original:
            raise ConfigurationError(f"encoding expects {self.n_original} columns, got {X.shape[1]}")
        cols = []
        for c, cats in enumerate(self.categories):
            if cats is None:
                cols.append(X[:, c:c + 1])
                continue
            known = np.isin(X[:, c], cats)
            if not known.all():
                raise ConfigurationError(f"column {c} holds a value outside its categories")
            cols.append((X[:, c:c + 1] == np.asarray(cats)[None, :]).astype(np.float64))
        return np.hstack(cols)


def onehot_owen_recovery_check(model, encoding: OneHotEncoding, data, x):
    """Block sums of encoded-space Owen values versus original-space Shapley values."""
    D = as_matrix(data)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    f = _predict_fn(model)
    encoded = empirical_marginal_game(f, encoding.encode(D), encoding.encode(x)[0])
    owen = GameValueSpec.owen(FeaturePartition(encoding.blocks))
    phi_encoded = brute_force_value(encoded, owen)
    sums = np.array([phi_encoded[list(b)].sum() for b in encoding.blocks])
    original = empirical_marginal_game(lambda Z: f(encoding.encode(Z)), D, x)
    direct = brute_force_value(original, GameValueSpec.shapley())
    return sums, direct, float(np.max(np.abs(sums - direct)))
