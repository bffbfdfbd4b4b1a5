"""Coefficient families, attribution weights and leaf-code combinatorics.

Coalitions of in-tree features are bitmasks over group indices
``0..k-1``. Coefficients are exact ``Fraction`` values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Iterable, Sequence

from .errors import CapacityError, ConfigurationError, DomainError, InputShapeError
from .trees import LevelPartition

MAX_PLAYERS = 60

SHAPLEY = "shapley"
BANZHAF = "banzhaf"
CUSTOM = "custom"


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def bits_of(mask: int) -> list[int]:
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def set_to_mask(items: Iterable[int]) -> int:
    m = 0
    for i in items:
        m |= 1 << i
    return m


def submasks(mask: int):
    """All submasks of ``mask``, from ``mask`` down to 0."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


@lru_cache(maxsize=None)
def _shapley_alpha(s: int, n: int) -> Fraction:
    return Fraction(factorial(s) * factorial(n - s - 1), factorial(n))


@dataclass(frozen=True)
class CoefficientFamily:
    """A symmetric coefficient family ``alpha(s, n)``.

    Custom families store rows ``table[n - 1][s]`` for ``n = 1..n_max``.
    """

    kind: str
    table: tuple[tuple[Fraction, ...], ...] = ()

    def __post_init__(self):
        if self.kind not in (SHAPLEY, BANZHAF, CUSTOM):
            raise ConfigurationError(f"unknown coefficient family {self.kind!r}")
        if self.kind == CUSTOM:
            rows = tuple(tuple(Fraction(v) for v in row) for row in self.table)
            if not rows:
                raise ConfigurationError("custom family needs at least one row")
            for n, row in enumerate(rows, start=1):
                if len(row) != n:
                    raise ConfigurationError(f"row for n={n} must have {n} entries")
            object.__setattr__(self, "table", rows)

    @classmethod
    def custom(cls, rows: Sequence[Sequence]) -> "CoefficientFamily":
        return cls(CUSTOM, tuple(tuple(r) for r in rows))

    @classmethod
    def from_top_row(cls, top: Sequence) -> "CoefficientFamily":
        """Custom family whose lower rows follow from ``top`` by the backward Pascal rule."""
        rows = [tuple(Fraction(v) for v in top)]
        while len(rows[0]) > 1:
            r = rows[0]
            rows.insert(0, tuple(r[s] + r[s + 1] for s in range(len(r) - 1)))
        return cls(CUSTOM, tuple(rows))

    @property
    def n_max(self) -> int | None:
        return len(self.table) if self.kind == CUSTOM else None

    def alpha(self, s: int, n: int) -> Fraction:
        if not 0 <= s < n:
            raise DomainError(f"coefficient needs 0 <= s < n, got s={s}, n={n}")
        if self.kind == SHAPLEY:
            return _shapley_alpha(s, n)
        if self.kind == BANZHAF:
            return Fraction(1, 2 ** (n - 1))
        if n > len(self.table):
            raise DomainError(f"custom family is tabulated only up to n={len(self.table)}")
        return self.table[n - 1][s]

    def descriptor(self) -> dict:
        if self.kind != CUSTOM:
            return {"kind": self.kind}
        return {"kind": CUSTOM, "n": len(self.table),
                "alphas": [[str(v) for v in row] for row in self.table]}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "CoefficientFamily":
        kind = desc.get("kind", CUSTOM)
        if kind in (SHAPLEY, BANZHAF):
            return cls(kind)
        rows = desc["alphas"]
        if "n" in desc and int(desc["n"]) != len(rows):
            raise ConfigurationError("alpha table length disagrees with its n field")
        return cls.custom([[Fraction(str(v)) for v in row] for row in rows])


SHAPLEY_FAMILY = CoefficientFamily(SHAPLEY)
BANZHAF_FAMILY = CoefficientFamily(BANZHAF)


def coefficient(family: CoefficientFamily, s: int, n: int) -> Fraction:
    return family.alpha(s, n)


def validate_backward_pascal(family: CoefficientFamily, n_max: int) -> bool:
    if family.n_max is not None and n_max > family.n_max:
        raise DomainError(f"family is tabulated only up to n={family.n_max}")
    for n in range(2, n_max + 1):
        for s in range(n - 1):
            if family.alpha(s, n) + family.alpha(s + 1, n) != family.alpha(s, n - 1):
                return False
    return True


@dataclass(frozen=True)
class FeaturePartition:
    """Disjoint nonempty blocks of feature indices."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(sorted(int(i) for i in b)) for b in self.blocks)
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise ConfigurationError("partition blocks must be nonempty")
            if seen.intersection(b):
                raise ConfigurationError("partition blocks overlap")
            seen.update(b)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def covering(cls, blocks: Iterable[Iterable[int]], n_features: int) -> "FeaturePartition":
        """Complete ``blocks`` with singletons for unlisted features."""
        blocks = [tuple(b) for b in blocks]
        listed = {i for b in blocks for i in b}
        if any(not 0 <= i < n_features for i in listed):
            raise InputShapeError("partition lists a feature outside the model")
        blocks += [(i,) for i in range(n_features) if i not in listed]
        return cls(tuple(blocks))

    @classmethod
    def singletons(cls, players: Iterable[int]) -> "FeaturePartition":
        return cls(tuple((i,) for i in players))

    def block_index(self, feature: int) -> int:
        for r, b in enumerate(self.blocks):
            if feature in b:
                return r
        raise ConfigurationError(f"feature {feature} is in no partition block")

    def restrict(self, players: Sequence[int]) -> "FeaturePartition":
        """Induced partition on ``players``: nonempty traces of the blocks."""
        present = set(players)
        for i in present:
            self.block_index(i)
        traces = [tuple(i for i in b if i in present) for b in self.blocks]
        return FeaturePartition(tuple(t for t in traces if t))

    def as_lists(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


COALITIONAL = "coalitional"
GENERIC = "generic"


@dataclass(frozen=True)
class GameValueSpec:
    """Which attribution to compute."""

    variant: str
    family: CoefficientFamily = SHAPLEY_FAMILY
    outer: CoefficientFamily | None = None
    partition: FeaturePartition | None = field(default=None)

    @classmethod
    def shapley(cls) -> "GameValueSpec":
        return cls(SHAPLEY, SHAPLEY_FAMILY)

    @classmethod
    def banzhaf(cls) -> "GameValueSpec":
        return cls(BANZHAF, BANZHAF_FAMILY)

    @classmethod
    def generic(cls, family: CoefficientFamily) -> "GameValueSpec":
        return cls(GENERIC, family)

    @classmethod
    def coalitional(cls, outer: CoefficientFamily, inner: CoefficientFamily,
                    partition: FeaturePartition) -> "GameValueSpec":
        """``outer`` weighs coalitions of blocks, ``inner`` coalitions within a block."""
        return cls(COALITIONAL, inner, outer, partition)

    @classmethod
    def owen(cls, partition: FeaturePartition) -> "GameValueSpec":
        return cls.coalitional(SHAPLEY_FAMILY, SHAPLEY_FAMILY, partition)

    def __post_init__(self):
        if self.variant not in (SHAPLEY, BANZHAF, GENERIC, COALITIONAL):
            raise ConfigurationError(f"unknown game value {self.variant!r}")
        if self.variant == COALITIONAL and (self.outer is None or self.partition is None):
            raise ConfigurationError("a coalitional value needs two families and a partition")

    @property
    def is_coalitional(self) -> bool:
        return self.variant == COALITIONAL

    @property
    def efficient(self) -> bool:
        if self.is_coalitional:
            return self.outer.kind == SHAPLEY and self.family.kind == SHAPLEY
        return self.family.kind == SHAPLEY

    def descriptor(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == GENERIC:
            d["family"] = self.family.descriptor()
        if self.is_coalitional:
            d["outer"] = self.outer.descriptor()
            d["inner"] = self.family.descriptor()
            d["partition"] = self.partition.as_lists()
        return d

    @classmethod
    def from_descriptor(cls, d: dict) -> "GameValueSpec":
        v = d.get("variant")
        if v == SHAPLEY:
            return cls.shapley()
        if v == BANZHAF:
            return cls.banzhaf()
        if v == GENERIC:
            return cls.generic(CoefficientFamily.from_descriptor(d["family"]))
        if v == COALITIONAL:
            return cls.coalitional(CoefficientFamily.from_descriptor(d["outer"]),
                                   CoefficientFamily.from_descriptor(d["inner"]),
                                   FeaturePartition(tuple(tuple(b) for b in d["partition"])))
        raise ConfigurationError(f"unknown game descriptor {d!r}")


PLUS = "plus"
MINUS = "minus"


def omega(family: CoefficientFamily, side: str, w: int, z: int, k: int) -> Fraction:
    """Weight of a nested pair ``Z ⊆ W`` of sizes ``z, w`` among ``k`` players."""
    if not 0 <= z <= w <= k:
        raise DomainError(f"omega needs 0 <= z <= w <= k, got z={z}, w={w}, k={k}")
    if side == PLUS:
        if z < 1:
            raise DomainError("the plus side needs z >= 1")
        if family.kind == SHAPLEY:
            return Fraction(factorial(z - 1) * factorial(k - w), factorial(k + z - w))
        if family.kind == BANZHAF:
            return Fraction(2 ** (w - z), 2 ** (k - 1))
        return family.alpha(z - 1, k + z - w)
    if side == MINUS:
        if w >= k:
            raise DomainError("the minus side needs w < k")
        if family.kind == SHAPLEY:
            return Fraction(factorial(z) * factorial(k - w - 1), factorial(k + z - w))
        if family.kind == BANZHAF:
            return Fraction(2 ** (w - z), 2 ** (k - 1))
        return family.alpha(z, k + z - w)
    raise DomainError(f"unknown side {side!r}")


def omega_tables(family: CoefficientFamily, k: int) -> tuple[list[list[float]], list[list[float]]]:
    """Float tables ``plus[w][z]`` and ``minus[w][z]``; invalid cells are 0."""
    plus = [[0.0] * (k + 1) for _ in range(k + 1)]
    minus = [[0.0] * (k + 1) for _ in range(k + 1)]
    for w in range(k + 1):
        for z in range(w + 1):
            if z >= 1:
                plus[w][z] = float(omega(family, PLUS, w, z, k))
            if w < k:
                minus[w][z] = float(omega(family, MINUS, w, z, k))
    return plus, minus


def hockey_stick_sum(z: int, w: int, n: int) -> Fraction:
    if not 0 <= z <= w < n:
        raise DomainError(f"hockey-stick sum needs 0 <= z <= w < n, got z={z}, w={w}, n={n}")
    return Fraction(factorial(z) * factorial(n - w - 1), factorial(n + z - w))


def hockey_stick_direct(z: int, w: int, n: int) -> Fraction:
    """The same quantity by summing Shapley coefficients term by term."""
    return sum((comb(w - z, s - z) * _shapley_alpha(s, n) for s in range(z, w + 1)), Fraction(0))


def _check_width(code: int, partition: LevelPartition):
    if code < 0 or code >> partition.depth:
        raise InputShapeError(f"code {code} is wider than {partition.depth} levels")


def match_set(e: int, e2: int, partition: LevelPartition) -> int:
    """Groups on which two codes agree, as a bitmask."""
    _check_width(e, partition)
    _check_width(e2, partition)
    diff = e ^ e2
    return sum(1 << q for q, m in enumerate(partition.masks) if (diff & m) == 0)


def preimage(e: int, Q: int, partition: LevelPartition, realizable=None) -> set[int]:
    """Codes agreeing with ``e`` exactly on the groups in ``Q``."""
    _check_width(e, partition)
    if Q >> partition.k:
        raise DomainError("Q is not a subset of the groups")
    choices = []
    for q, m in enumerate(partition.masks):
        own = e & m
        if (Q >> q) & 1:
            choices.append((own,))
        else:
            choices.append(tuple(p for p in submasks(m) if p != own))
    out = {sum(parts) for parts in itertools.product(*choices)}
    if realizable is not None:
        out &= set(int(c) for c in realizable)
    return out


def _blocks_touched(partition: FeaturePartition, S: frozenset, home: int) -> set[int]:
    return {r for r, b in enumerate(partition.blocks) if r != home and S.intersection(b)}


def _blocks_inside(partition: FeaturePartition, S: frozenset, home: int) -> set[int]:
    return {r for r, b in enumerate(partition.blocks) if r != home and S.issuperset(b)}


def owen_nested_weight(outer: CoefficientFamily, inner: CoefficientFamily,
                       partition: FeaturePartition, i: int, Z: Iterable[int], W: Iterable[int]) -> Fraction:
    """Total coalitional coefficient of coalitions S with Z ⊆ S ⊆ W, for player i.

    Only coalitions without ``i`` carry a coefficient, so ``i`` is dropped
    from ``Z`` and ``W`` first.
    """
    Z, W = frozenset(Z), frozenset(W)
    if not Z <= W:
        raise DomainError("Z must be a subset of W")
    Z, W = Z - {i}, W - {i}
    j = partition.block_index(i)
    home = frozenset(partition.blocks[j])
    touched = _blocks_touched(partition, Z, j)
    inside = _blocks_inside(partition, W, j)
    if not touched <= inside:
        return Fraction(0)
    n_blocks = len(partition.blocks)
    zs, ws = len(Z & home), len(W & home)
    return (outer.alpha(len(touched), n_blocks + len(touched) - len(inside))
            * inner.alpha(zs, len(home) + zs - ws))


INT = "int"
INC = "inc"


def int_inc_sets(partition: FeaturePartition, j: int, Qstar: Iterable[int],
                 Qcal: Iterable[int], mode: str) -> set[frozenset]:
    """Coalitions with a fixed home-block trace and a fixed set of touched or covered blocks."""
    Qstar, Qcal = frozenset(Qstar), frozenset(Qcal)
    home = partition.blocks[j]
    if not Qstar <= set(home):
        raise DomainError("Qstar must lie inside the home block")
    if j in Qcal or any(not 0 <= r < len(partition.blocks) for r in Qcal):
        raise DomainError("Qcal must index blocks other than the home block")
    if mode not in (INT, INC):
        raise DomainError(f"unknown mode {mode!r}")
    options = []
    for r, b in enumerate(partition.blocks):
        if r == j:
            continue
        subsets = [frozenset(c) for n in range(len(b) + 1) for c in itertools.combinations(b, n)]
        if mode == INT:
            keep = [s for s in subsets if bool(s) == (r in Qcal)]
        else:
            keep = [s for s in subsets if (len(s) == len(b)) == (r in Qcal)]
        options.append(keep)
    return {Qstar.union(*parts) for parts in itertools.product(*options)}


def check_players(k: int):
    if k > MAX_PLAYERS:
        raise CapacityError(f"{k} distinct features exceeds the limit of {MAX_PLAYERS}")
