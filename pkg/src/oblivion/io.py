"""Reading and writing models, datasets, tables and game descriptions."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import AttributionTables, TreeTable
from .errors import ConfigurationError, FormatError, InputShapeError
from .games import CoefficientFamily, FeaturePartition, GameValueSpec, validate_backward_pascal
from .trees import (
    Dataset,
    Ensemble,
    GenericTree,
    Node,
    ObliviousTree,
    code_to_str,
    obliviousize,
    str_to_code,
)

TABLE_VERSION = 1
REFERENCE_TOL = 1e-9


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    except OSError as exc:
        raise FormatError(str(exc), path) from None


def _power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _node_from_json(d, where: str) -> Node:
    if "value" in d:
        return Node.leaf(float(d["value"]))
    try:
        return Node.split(int(d["feature"]), float(d["threshold"]),
                          _node_from_json(d["left"], where + ".left"),
                          _node_from_json(d["right"], where + ".right"))
    except (KeyError, TypeError):
        raise FormatError(f"malformed generic node at {where}") from None


def _node_to_json(node: Node) -> dict:
    if node.is_leaf:
        return {"value": node.value}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _node_to_json(node.left), "right": _node_to_json(node.right)}


def tree_to_dict(tree: ObliviousTree) -> dict:
    d = {"levels": [{"feature": f, "threshold": t} for f, t in tree.levels],
         "leaf_values": tree.leaf_values.tolist()}
    if tree.leaf_probabilities is not None:
        d["leaf_probabilities"] = tree.leaf_probabilities.tolist()
    return d


def ensemble_to_dict(ensemble: Ensemble) -> dict:
    return {"n_features": ensemble.n_features, "scale": ensemble.scale, "bias": ensemble.bias,
            "trees": [tree_to_dict(t) for t in ensemble.trees]}


def ensemble_from_dict(doc: dict, path=None) -> Ensemble:
    try:
        n = int(doc["n_features"])
        scale = float(doc.get("scale", 1.0))
        bias = float(doc.get("bias", 0.0))
        raw_trees = doc["trees"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"missing or invalid top-level field: {exc}", path) from None
    trees = []
    for idx, t in enumerate(raw_trees):
        where = f"trees[{idx}]"
        if "generic" in t:
            tree, _ = obliviousize(GenericTree(_node_from_json(t["generic"], where + ".generic")))
            trees.append(tree)
            continue
        try:
            levels = t["levels"]
            feats = [int(lv["feature"]) for lv in levels]
            thr = [float(lv["threshold"]) for lv in levels]
            values = t["leaf_values"]
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"malformed tree at {where}", path) from None
        if not _power_of_two(len(values)) or len(values) != 1 << len(levels):
            raise FormatError(f"{where}.leaf_values has length {len(values)}, "
                              f"expected 2^{len(levels)}", path)
        probs = t.get("leaf_probabilities")
        if probs is not None and len(probs) != len(values):
            raise FormatError(f"{where}.leaf_probabilities has length {len(probs)}", path)
        try:
            trees.append(ObliviousTree(feats, thr, values, probs))
        except (ConfigurationError, InputShapeError) as exc:
            raise FormatError(f"{where}: {exc}", path) from None
    try:
        return Ensemble(tuple(trees), n, scale, bias)
    except (ConfigurationError, InputShapeError) as exc:
        raise FormatError(str(exc), path) from None


def save_model(ensemble: Ensemble, path) -> None:
    Path(path).write_text(_dump(ensemble_to_dict(ensemble)))


@dataclass(frozen=True, eq=False)
class CatBoostImport:
    ensemble: Ensemble
    orientation: str
    validated: bool


def import_catboost(doc: dict, reference=None, path=None) -> CatBoostImport:
    """Build an ensemble from a CatBoost JSON model dump.

    ``reference`` is an optional ``(X, predictions)`` pair. Split position 0
    is taken as the root level first; on a prediction mismatch the reversed
    order is tried, and the import fails if neither matches.
    """
    try:
        raw_trees = doc["oblivious_trees"]
    except (KeyError, TypeError):
        raise FormatError("no oblivious_trees section", path) from None
    floats = doc.get("features_info", {}).get("float_features", [])
    flat = {}
    for pos, ff in enumerate(floats):
        flat[int(ff.get("feature_index", pos))] = int(ff.get("flat_feature_index", ff.get("feature_index", pos)))
    scale, bias = 1.0, 0.0
    sb = doc.get("scale_and_bias")
    if sb is not None:
        scale = float(sb[0])
        b = sb[1]
        if isinstance(b, list):
            if len(b) != 1:
                raise FormatError("multi-dimensional bias is not supported", path)
            b = b[0]
        bias = float(b)
    parsed = []
    for idx, t in enumerate(raw_trees):
        where = f"oblivious_trees[{idx}]"
        feats, thr = [], []
        for sidx, sp in enumerate(t.get("splits", [])):
            kind = sp.get("split_type", "FloatFeature")
            if kind != "FloatFeature":
                raise FormatError(f"{where}.splits[{sidx}] has unsupported type {kind}", path)
            fi = int(sp["float_feature_index"])
            feats.append(flat.get(fi, fi))
            thr.append(float(sp["border"]))
        values = t.get("leaf_values", [])
        if not _power_of_two(len(values)) or len(values) != 1 << len(feats):
            raise FormatError(f"{where}.leaf_values has length {len(values)}, "
                              f"expected 2^{len(feats)}", path)
        if not feats:
            raise FormatError(f"{where} has no splits", path)
        weights = t.get("leaf_weights")
        probs = None
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            if w.size != len(values) or w.sum() <= 0:
                raise FormatError(f"{where}.leaf_weights are unusable", path)
            probs = w / w.sum()
        parsed.append((feats, thr, values, probs))
    n = max([len(floats)] + [max(f) + 1 for f, *_ in parsed])

    def build(reverse: bool) -> Ensemble:
        trees = []
        for feats, thr, values, probs in parsed:
            if reverse:
                feats, thr = feats[::-1], thr[::-1]
            try:
                trees.append(ObliviousTree(feats, thr, values, probs))
            except (ConfigurationError, InputShapeError):
                # leaf weights may be incompatible with one orientation
                trees.append(ObliviousTree(feats, thr, values, None))
        return Ensemble(tuple(trees), n, scale, bias)

    if reference is None:
        return CatBoostImport(build(False), "root-first", False)
    X, y = reference
    for orientation, reverse in (("root-first", False), ("root-last", True)):
        ens = build(reverse)
        if np.max(np.abs(ens.predict(X) - np.asarray(y)), initial=0.0) <= REFERENCE_TOL:
            return CatBoostImport(ens, orientation, True)
    raise FormatError("reference predictions match neither split orientation", path)


def load_model(path, format: str = "canonical", reference=None) -> Ensemble:
    doc = _read_json(path)
    if format == "canonical":
        ens = ensemble_from_dict(doc, path)
        if reference is not None:
            X, y = reference
            if np.max(np.abs(ens.predict(X) - np.asarray(y)), initial=0.0) > REFERENCE_TOL:
                raise FormatError("model does not reproduce the reference predictions", path)
        return ens
    if format == "catboost-dump":
        return import_catboost(doc, reference, path).ensemble
    raise ConfigurationError(f"unknown model format {format!r}")


def load_dataset(path, header: bool = False) -> Dataset:
    rows, columns, width = [], None, None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if header and columns is None:
                columns = tuple(c.strip() for c in rec)
                width = len(columns)
                continue
            if width is None:
                width = len(rec)
            elif len(rec) != width:
                raise FormatError(f"expected {width} cells, found {len(rec)}", path, lineno)
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise FormatError("non-numeric cell", path, lineno) from None
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), width or 0)
    if columns is not None and width and matrix.shape[1] != len(columns):
        raise FormatError("header width differs from data width", path)
    return Dataset(matrix, columns)


def tables_to_dict(tables: AttributionTables) -> dict:
    trees = []
    for t in tables.trees:
        rows = {code_to_str(int(c), t.depth): r.tolist() for c, r in zip(t.codes, t.rows)}
        trees.append({"features": list(t.features), "depth": t.depth, "rows": rows})
    return {"version": TABLE_VERSION, "game": tables.game.descriptor(),
            "n_features": tables.n_features, "trees": trees}


def tables_from_dict(doc: dict, path=None) -> AttributionTables:
    if doc.get("version") != TABLE_VERSION:
        raise FormatError(f"unsupported table version {doc.get('version')!r}", path)
    try:
        game = GameValueSpec.from_descriptor(doc["game"])
        trees = []
        for idx, t in enumerate(doc["trees"]):
            feats = tuple(int(f) for f in t["features"])
            depth = int(t["depth"])
            items = sorted((str_to_code(key), row) for key, row in t["rows"].items())
            for key, row in t["rows"].items():
                if len(key) != depth or len(row) != len(feats):
                    raise FormatError(f"trees[{idx}] row {key} has the wrong shape", path)
            codes = np.array([c for c, _ in items], dtype=np.int64)
            rows = np.array([r for _, r in items], dtype=np.float64).reshape(len(items), len(feats))
            trees.append(TreeTable(feats, codes, rows, depth))
        return AttributionTables(game, tuple(trees), int(doc["n_features"]))
    except (KeyError, TypeError, ValueError, InputShapeError, ConfigurationError) as exc:
        raise FormatError(f"malformed table file: {exc}", path) from None


def save_tables(tables: AttributionTables, path) -> None:
    Path(path).write_text(_dump(tables_to_dict(tables)))


def load_tables(path) -> AttributionTables:
    return tables_from_dict(_read_json(path), path)


def load_partition(path, n_features: int) -> FeaturePartition:
    doc = _read_json(path)
    if not isinstance(doc, list) or not all(isinstance(b, list) for b in doc):
        raise FormatError("partition must be a list of feature-index lists", path)
    try:
        return FeaturePartition.covering([[int(i) for i in b] for b in doc], n_features)
    except (ConfigurationError, InputShapeError) as exc:
        raise FormatError(str(exc), path) from None


def load_family(path) -> CoefficientFamily:
    doc = _read_json(path)
    if not isinstance(doc, dict) or "alphas" not in doc:
        raise FormatError('coefficient file needs an "alphas" table', path)
    try:
        return CoefficientFamily.from_descriptor({"kind": "custom", **doc})
    except (ConfigurationError, ValueError, ZeroDivisionError) as exc:
        raise FormatError(str(exc), path) from None


def parse_game(text: str, n_features: int) -> GameValueSpec:
    """``shapley``, ``banzhaf``, ``owen:<partition file>`` or ``custom:<alpha file>``."""
    if text == "shapley":
        return GameValueSpec.shapley()
    if text == "banzhaf":
        return GameValueSpec.banzhaf()
    kind, _, arg = text.partition(":")
    if kind == "owen" and arg:
        return GameValueSpec.owen(load_partition(arg, n_features))
    if kind == "custom" and arg:
        fam = load_family(arg)
        if not validate_backward_pascal(fam, fam.n_max):
            raise ConfigurationError(f"coefficients in {arg} violate the backward Pascal identity")
        return GameValueSpec.generic(fam)
    raise ConfigurationError(f"unknown game {text!r}")
