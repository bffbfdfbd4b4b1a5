"""Small worked examples with known answers, used by ``oblivion repro``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import explain, precompute_ensemble, precompute_tree_table, term_count_audit
from .games import GameValueSpec
from .oracle import brute_force_value, eject_game, empirical_marginal_game, path_dependent_game
from .trees import Ensemble, GenericTree, Node, ObliviousTree, code_to_str, obliviousize, str_to_code

TOL = 1e-4


@dataclass
class Check:
    name: str
    value: float
    expected: float | None = None
    tol: float = TOL
    passed: bool | None = None

    def __post_init__(self):
        if self.passed is None and self.expected is not None:
            self.passed = abs(self.value - self.expected) <= self.tol


@dataclass
class Report:
    title: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.passed is not None)

    def lines(self) -> list[str]:
        out = [self.title]
        for c in self.checks:
            status = "" if c.passed is None else ("PASS" if c.passed else "FAIL")
            target = "" if c.expected is None else f"  expected {c.expected:.6g}"
            out.append(f"  {c.name:<44} {c.value: .6f}{target}  {status}".rstrip())
        out.append("PASS" if self.passed else "FAIL")
        return out


SHAPLEY = GameValueSpec.shapley()


def gap(game) -> float:
    """Difference of the two players' Shapley values, equal to v({1}) - v({2})."""
    phi = brute_force_value(game, SHAPLEY)
    return float(phi[0] - phi[1])


# Region probabilities and leaf values of the two-tree example.
PROBS = {"R1-": 0.33, "R1+": 0.01, "R2": 0.27, "R3": 0.39}
C1, C2, C3 = 2.03, 1.0, 2.0
CENTRES = {"R1-": (-0.5, -0.5), "R1+": (0.5, -0.5), "R2": (-0.5, 0.5), "R3": (0.5, 0.5)}


def two_tree_pair(c1=C1, c2=C2, c3=C3) -> tuple[GenericTree, GenericTree]:
    """Two trees computing one step function, splitting in different orders."""
    first = GenericTree(Node.split(1, 0.0, Node.leaf(c1),
                                   Node.split(0, 0.0, Node.leaf(c2), Node.leaf(c3))))
    second = GenericTree(Node.split(0, 0.0,
                                    Node.split(1, 0.0, Node.leaf(c1), Node.leaf(c2)),
                                    Node.split(1, 0.0, Node.leaf(c1), Node.leaf(c3))))
    return first, second


def two_tree_data(n: int = 100) -> np.ndarray:
    rows = []
    for region, p in PROBS.items():
        rows += [CENTRES[region]] * int(round(p * n))
    return np.array(rows, dtype=np.float64)


def _realize(source: GenericTree, skeleton: ObliviousTree) -> ObliviousTree:
    """Fill an oblivious skeleton with the source tree's values and region masses."""
    values = np.zeros(skeleton.n_leaves)
    probs = np.zeros(skeleton.n_leaves)
    for region, p in PROBS.items():
        pt = np.array(CENTRES[region])
        code = skeleton.route(pt)[0]
        values[code] = source.predict(pt)[0]
        probs[code] += p
    return ObliviousTree(skeleton.features, skeleton.thresholds, values, probs)


def repro_two_trees() -> Report:
    first, second = two_tree_pair()
    D = two_tree_data()
    x = np.array(CENTRES["R2"])
    rep = Report("two equivalent trees on four regions, explicand in the upper-left region")
    g1 = path_dependent_game(first, D, x, players=(0, 1))
    g2 = path_dependent_game(second, D, x, players=(0, 1))
    rep.checks.append(Check("path-dependent v({1}) on the first tree", g1((0,)), 1.3502))
    rep.checks.append(Check("path-dependent gap, first tree", gap(g1), -0.24071))
    rep.checks.append(Check("path-dependent gap, second tree", gap(g2), 0.1665))
    rep.checks.append(Check("path-dependent gaps have opposite signs",
                            float(np.sign(gap(g1)) * np.sign(gap(g2))), -1.0, 0.0))
    for name, tree in (("first", first), ("second", second)):
        emp = empirical_marginal_game(tree.predict, D, x)
        rep.checks.append(Check(f"marginal gap, {name} tree (brute force)", gap(emp), -0.0498))
    # oblivious realizations with opposite level orders
    realizations = [_realize(first, obliviousize(first)[0]),
                    _realize(first, ObliviousTree([1, 0], [0.0, 0.0], np.zeros(4)))]
    phis = []
    for tree in realizations:
        ens = Ensemble((tree,), 2)
        phis.append(explain(precompute_ensemble(ens, SHAPLEY, threads=1), ens, x))
    rep.checks.append(Check("marginal gap from tables, first level order", phis[0][0] - phis[0][1], -0.0498))
    rep.checks.append(Check("marginal gap from tables, second level order", phis[1][0] - phis[1][1], -0.0498))
    rep.checks.append(Check("table attributions agree across level orders",
                            float(np.max(np.abs(phis[0] - phis[1]))), 0.0, 1e-12))
    return rep


def staircase_tree(probabilities=None) -> ObliviousTree:
    """Depth-3 tree on two features whose first feature repeats."""
    values = np.zeros(8)
    for code, v in zip(["000", "010", "100", "110", "101", "111"], [0, 1, 2, 4, 4, 5]):
        values[str_to_code(code)] = v
    tree = ObliviousTree([0, 1, 0], [1.0, 1.0, 2.0], values)
    if probabilities is None:
        probabilities = np.zeros(8)
        probabilities[tree.realizable] = 1.0 / tree.realizable.size
    return tree.with_probabilities(probabilities)


def repro_staircase() -> Report:
    tree = staircase_tree()
    rep = Report("depth-3 tree splitting twice on the first feature")
    codes = sorted(code_to_str(int(c), 3) for c in tree.realizable)
    expected = sorted(["000", "010", "100", "110", "101", "111"])
    rep.checks.append(Check("realizable leaves " + " ".join(codes), float(len(codes)), 6.0, 0.0,
                            passed=codes == expected))
    row = precompute_tree_table(tree, SHAPLEY).row(str_to_code("110"))
    rep.checks.append(Check("Shapley value of the first feature at 110", row[0], 0.5, 1e-12))
    rep.checks.append(Check("Shapley value of the second feature at 110", row[1], 5 / 6, 1e-12))
    c = {s: tree.leaf_values[str_to_code(s)] for s in expected}
    p = {s: tree.leaf_probabilities[str_to_code(s)] for s in expected}
    first = (0.5 * c["100"] * (p["000"] + p["101"]) + 0.5 * c["110"] * (p["000"] + p["101"])
             + c["110"] * (p["010"] + p["111"]))
    second = (0.5 * (c["000"] * p["000"] + c["101"] * p["101"])
              + 0.5 * (c["010"] * p["000"] + c["111"] * p["101"])
              + (c["010"] * p["010"] + c["111"] * p["111"]))
    rep.checks.append(Check("expanded sum difference at 110", first - second, row[0], 1e-12))
    audit = term_count_audit(ObliviousTree([0, 1, 2], [0.0, 0.0, 0.0], np.zeros(8)))
    rep.checks.append(Check("product terms per leaf and feature, three features",
                            float(audit.count), 18.0, 0.0))
    return rep


def quadrant_pair(c1=1.0, c2=2.0, c3=3.0) -> tuple[GenericTree, GenericTree]:
    """Two depth-2 trees with the same four leaves and swapped split order."""
    first = GenericTree(Node.split(0, 0.0,
                                   Node.split(1, 0.0, Node.leaf(c1), Node.leaf(c2)),
                                   Node.split(1, 0.0, Node.leaf(c3), Node.leaf(c1))))
    second = GenericTree(Node.split(1, 0.0,
                                    Node.split(0, 0.0, Node.leaf(c1), Node.leaf(c3)),
                                    Node.split(0, 0.0, Node.leaf(c2), Node.leaf(c1))))
    return first, second


def repro_eject(c1=1.0, c2=2.0, c3=3.0) -> Report:
    first, second = quadrant_pair(c1, c2, c3)
    D = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
    x = np.array([-0.5, 0.5])
    rep = Report("eject recursion on two orderings of one quadrant function, upper-left point")
    g1 = eject_game(first, D, x, players=(0, 1))
    g2 = eject_game(second, D, x, players=(0, 1))
    rep.checks.append(Check("first tree v({1})", g1((0,)), (c1 + c2) / 2, 1e-12))
    rep.checks.append(Check("first tree v({2})", g1((1,)), (2 * c1 + c2 + c3) / 4, 1e-12))
    rep.checks.append(Check("second tree v({1})", g2((0,)), (2 * c1 + c2 + c3) / 4, 1e-12))
    rep.checks.append(Check("second tree v({2})", g2((1,)), (c1 + c2) / 2, 1e-12))
    d1, d2 = gap(g1), gap(g2)
    rep.checks.append(Check("first tree gap", d1))
    rep.checks.append(Check("second tree gap", d2))
    rep.checks.append(Check("gaps have opposite signs", float(np.sign(d1) * np.sign(d2)), -1.0, 0.0))
    return rep


REPRODUCTIONS = {"3.1": repro_two_trees, "3.6": repro_staircase, "C.2": repro_eject}
