"""Split search with information gain, recursive tree growth, prediction.

Candidate tests are binary: numeric thresholds at midpoints of consecutive
distinct defined values, one equality test per categorical value present, and
the true-test for boolean features.  Each candidate induces a ternary
pass/fail/undefined partition; the undefined rows are merged into whichever
side scores the higher gain (ties go to fail) and the node remembers that
routing so prediction can follow it.

Growth follows the lazy scheme: try to split on the columns at hand, and only
when no test clears the gain threshold extend the node's table with features
from deeper join paths, once, before giving up and making a leaf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .features import (
    AGG_NAMES,
    BOOLEAN,
    NUMERIC,
    Agg,
    FeatureColumn,
    FeatureDescriptor,
    aggregate_categorical,
    aggregate_numeric,
)
from .joinpath import Hop, JoinPath
from .ldt import LocalDataTable, build_root_ldt, extend_ldt, partition_ldt
from .params import LearnParams
from .schema import fingerprint
from .storage import CategoricalColumn, Database, NumericColumn

MODEL_FORMAT = "reltree-model"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Unreadable or incompatible model document."""


class ModelMismatchError(ValueError):
    """Database schema does not match the model's fingerprint."""


def entropy(counts) -> float:
    """Shannon entropy in bits of a nonnegative count vector."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("entropy of an empty distribution")
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(totals > 0, counts / totals, 0.0)
    logs = np.zeros_like(p)
    np.log2(p, out=logs, where=p > 0)
    return -(p * logs).sum(axis=1)


@dataclass(frozen=True)
class SplitTest:
    descriptor: FeatureDescriptor
    kind: str  # "numeric_le" | "categorical_eq" | "boolean_true"
    threshold: float | None = None
    value: str | None = None
    value_code: int | None = None
    undefined_route: str = "fail"  # "pass" | "fail"


def _score_candidates(pass_counts, fail_counts, undef_counts, n, h_parent):
    """Gain of each candidate under both undefined routings.

    Returns (ig, route_is_pass); candidates where neither routing yields two
    nonempty sides score -inf.
    """
    undef = undef_counts[None, :].astype(np.float64)

    def ig_of(left, right):
        nl = left.sum(axis=1)
        nr = right.sum(axis=1)
        h = h_parent - (nl * _entropy_rows(left) + nr * _entropy_rows(right)) / n
        return np.where((nl > 0) & (nr > 0), h, -np.inf)

    pc = pass_counts.astype(np.float64)
    fc = fail_counts.astype(np.float64)
    ig_fail = ig_of(pc, fc + undef)
    ig_pass = ig_of(pc + undef, fc)
    route_is_pass = ig_pass > ig_fail  # ties routed to fail
    return np.where(route_is_pass, ig_pass, ig_fail), route_is_pass


def _best_on_column(col: FeatureColumn, labels: np.ndarray, n_classes: int, n: int, h_parent: float):
    defined = col.defined
    undef_counts = np.bincount(labels[~defined], minlength=n_classes)
    d_idx = np.nonzero(defined)[0]
    if d_idx.size == 0:
        return None
    d_labels = labels[d_idx]
    total_def = np.bincount(d_labels, minlength=n_classes)

    if col.kind == NUMERIC:
        vals = col.values[d_idx]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        sl = d_labels[order]
        boundaries = np.nonzero(sv[1:] != sv[:-1])[0]
        if boundaries.size == 0:
            return None
        onehot = np.zeros((len(sl), n_classes), dtype=np.int64)
        onehot[np.arange(len(sl)), sl] = 1
        cum = np.cumsum(onehot, axis=0)
        pass_counts = cum[boundaries]
        fail_counts = total_def[None, :] - pass_counts
        thresholds = (sv[boundaries] + sv[boundaries + 1]) / 2.0
        # A midpoint of two adjacent floats can round up onto the larger
        # value; keep `v <= threshold` equivalent to the positional split.
        rounded_up = thresholds >= sv[boundaries + 1]
        thresholds[rounded_up] = sv[boundaries][rounded_up]
        ig, route_pass = _score_candidates(pass_counts, fail_counts, undef_counts, n, h_parent)
        i = int(np.argmax(ig))
        if not np.isfinite(ig[i]):
            return None
        test = SplitTest(
            descriptor=col.descriptor,
            kind="numeric_le",
            threshold=float(thresholds[i]),
            undefined_route="pass" if route_pass[i] else "fail",
        )
        return float(ig[i]), test

    if col.kind == BOOLEAN:
        truthy = col.values.astype(bool)[d_idx]
        pass_counts = np.bincount(d_labels[truthy], minlength=n_classes)[None, :]
        fail_counts = total_def[None, :] - pass_counts
        ig, route_pass = _score_candidates(pass_counts, fail_counts, undef_counts, n, h_parent)
        if not np.isfinite(ig[0]):
            return None
        test = SplitTest(
            descriptor=col.descriptor,
            kind="boolean_true",
            undefined_route="pass" if route_pass[0] else "fail",
        )
        return float(ig[0]), test

    # categorical: one one-vs-rest equality test per value present
    codes = col.values[d_idx].astype(np.int64)
    k = len(col.dictionary or ())
    if k == 0:
        return None
    present = np.unique(codes)
    counts_by_code = np.bincount(codes * n_classes + d_labels, minlength=k * n_classes).reshape(k, n_classes)
    pass_counts = counts_by_code[present]
    fail_counts = total_def[None, :] - pass_counts
    ig, route_pass = _score_candidates(pass_counts, fail_counts, undef_counts, n, h_parent)
    i = int(np.argmax(ig))
    if not np.isfinite(ig[i]):
        return None
    code = int(present[i])
    test = SplitTest(
        descriptor=col.descriptor,
        kind="categorical_eq",
        value=col.dictionary[code],
        value_code=code,
        undefined_route="pass" if route_pass[i] else "fail",
    )
    return float(ig[i]), test


def best_split(ldt: LocalDataTable, params: LearnParams) -> tuple[SplitTest, float] | None:
    """Highest-gain valid test over the LDT's columns, or None.

    Gain ties between tests break by descriptor order, then by lower
    threshold / value code.
    """
    n = len(ldt)
    parent = np.bincount(ldt.labels, minlength=ldt.n_classes)
    h_parent = entropy(parent)
    best: tuple[float, SplitTest] | None = None
    for col in sorted(ldt.columns, key=lambda c: c.descriptor.sort_key()):
        found = _best_on_column(col, ldt.labels, ldt.n_classes, n, h_parent)
        if found is None:
            continue
        if best is None or found[0] > best[0]:
            best = found
    if best is None:
        return None
    return best[1], best[0]


@dataclass(frozen=True)
class LeafNode:
    counts: tuple[int, ...]
    prediction: int


@dataclass(frozen=True)
class InnerNode:
    test: SplitTest
    ig: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = LeafNode | InnerNode


@dataclass(eq=False)
class TreeModel:
    root: TreeNode
    params: LearnParams
    mode: str
    class_labels: tuple[str, ...]
    schema_fingerprint: str
    descriptors: tuple[FeatureDescriptor, ...]

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if isinstance(node, InnerNode):
                stack.append(node.right)
                stack.append(node.left)

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.iter_nodes())


def _leaf(ldt: LocalDataTable) -> LeafNode:
    counts = np.bincount(ldt.labels, minlength=ldt.n_classes)
    return LeafNode(counts=tuple(int(c) for c in counts), prediction=int(np.argmax(counts)))


def _grow(db: Database, ldt: LocalDataTable, params: LearnParams, depth: int, used: frozenset, extendable: bool) -> TreeNode:
    if depth >= params.max_depth or len(ldt) < params.min_inst:
        return _leaf(ldt)
    # A split's gain never exceeds the node entropy, so when that bound
    # already fails the threshold no extension can help: leaf immediately.
    if entropy(np.bincount(ldt.labels, minlength=ldt.n_classes)) <= params.min_ig:
        return _leaf(ldt)
    found = best_split(ldt, params)
    if found is not None and found[1] > params.min_ig:
        test, ig = found
        left, right = partition_ldt(ldt, test)
        used2 = used | {test.descriptor.path}
        return InnerNode(
            test=test,
            ig=ig,
            left=_grow(db, left, params, depth + 1, used2, extendable),
            right=_grow(db, right, params, depth + 1, used2, extendable),
        )
    if not extendable:
        return _leaf(ldt)
    extended = extend_ldt(db, ldt, params, used)
    if extended is None:
        return _leaf(ldt)
    found = best_split(extended, params)
    if found is not None and found[1] > params.min_ig:
        test, ig = found
        left, right = partition_ldt(extended, test)
        used2 = used | {test.descriptor.path}
        return InnerNode(
            test=test,
            ig=ig,
            left=_grow(db, left, params, depth + 1, used2, extendable),
            right=_grow(db, right, params, depth + 1, used2, extendable),
        )
    return _leaf(extended)


def _collect_descriptors(root: TreeNode) -> tuple[FeatureDescriptor, ...]:
    seen: dict[FeatureDescriptor, None] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if isinstance(node, InnerNode):
            seen.setdefault(node.test.descriptor)
            stack.append(node.right)
            stack.append(node.left)
    return tuple(sorted(seen, key=lambda d: d.sort_key()))


def model_from_root(db: Database, root: TreeNode, params: LearnParams, mode: str) -> TreeModel:
    from .ldt import target_labels

    _, _, classes = target_labels(db)
    return TreeModel(
        root=root,
        params=params,
        mode=mode,
        class_labels=classes,
        schema_fingerprint=fingerprint(db.catalog),
        descriptors=_collect_descriptors(root),
    )


def grow_tree(db: Database, params: LearnParams, instance_ids=None) -> TreeModel:
    """Learn a tree lazily over the database (optionally on an instance subset)."""
    ldt = build_root_ldt(db, params, instance_ids)
    root = _grow(db, ldt, params, depth=0, used=frozenset(), extendable=True)
    return model_from_root(db, root, params, mode=f"lazy-{params.strategy}")


# ---------------------------------------------------------------------------
# Prediction


@dataclass(frozen=True)
class Prediction:
    label: str
    index: int
    probabilities: tuple[float, ...]

    @property
    def confidence(self) -> float:
        return self.probabilities[self.index]


def _bag_rows(db: Database, row: int, path: JoinPath, cache: dict) -> np.ndarray:
    if path in cache:
        return cache[path]
    if path.is_root:
        bag = np.array([row], dtype=np.int64)
    else:
        parent = _bag_rows(db, row, path.prefix(len(path.hops) - 1), cache)
        hop = path.hops[-1]
        col = db.tables[hop.from_table].columns[hop.from_column]
        index = db.indexes[(hop.to_table, hop.to_column)]
        parts = [index.lookup(int(c)) for c in col.codes[parent]]
        bag = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    cache[path] = bag
    return bag


_NUMERIC_FIELD = {
    Agg.AVG: "avg",
    Agg.STD: "std",
    Agg.VAR: "var",
    Agg.MAX: "max",
    Agg.MIN: "min",
    Agg.SUM: "sum",
    Agg.COUNT: "count",
}


def _descriptor_value(db: Database, row: int, d: FeatureDescriptor, cache: dict):
    """(value, defined) of one feature for one instance, computed on demand."""
    bag = _bag_rows(db, row, d.path, cache)
    if d.agg is Agg.IS_EMPTY:
        return len(bag) == 0, True
    col = db.tables[d.path.terminal_table].columns[d.attribute]
    if isinstance(col, NumericColumn):
        multiset = [None if col.missing[r] else float(col.values[r]) for r in bag]
    else:
        assert isinstance(col, CategoricalColumn)
        multiset = [None if col.missing[r] else col.dictionary[col.codes[r]] for r in bag]

    if d.agg is Agg.IDENTITY:
        if len(multiset) == 1 and multiset[0] is not None:
            return multiset[0], True
        return None, False
    if d.agg in _NUMERIC_FIELD and isinstance(col, NumericColumn):
        v = getattr(aggregate_numeric(multiset), _NUMERIC_FIELD[d.agg])
        return v, v is not None
    if d.agg is Agg.CONTAINS:
        if not multiset:
            return None, False
        present = {v for v in multiset if v is not None}
        if not present:
            return None, False
        return d.value in present, True
    ca = aggregate_categorical(multiset, col.dictionary if isinstance(col, CategoricalColumn) else (), False)
    if d.agg is Agg.COUNT:
        return ca.count, ca.count is not None
    if d.agg is Agg.DISTINCT_COUNT:
        return ca.distinct_count, ca.distinct_count is not None
    raise ValueError(f"cannot evaluate aggregator {d.agg!r}")


def _passes(test: SplitTest, value) -> bool:
    if test.kind == "numeric_le":
        return float(value) <= test.threshold
    if test.kind == "boolean_true":
        return bool(value)
    if test.kind == "categorical_eq":
        return value == test.value
    raise ValueError(f"unknown test kind {test.kind!r}")


def _predict_one(model: TreeModel, db: Database, row: int) -> Prediction:
    cache: dict = {}
    node = model.root
    while isinstance(node, InnerNode):
        value, ok = _descriptor_value(db, row, node.test.descriptor, cache)
        if not ok:
            go_left = node.test.undefined_route == "pass"
        else:
            go_left = _passes(node.test, value)
        node = node.left if go_left else node.right
    total = sum(node.counts)
    probs = tuple(c / total for c in node.counts)
    return Prediction(label=model.class_labels[node.prediction], index=node.prediction, probabilities=probs)


def check_compatible(model: TreeModel, db: Database) -> None:
    if fingerprint(db.catalog) != model.schema_fingerprint:
        raise ModelMismatchError("database schema does not match the model's schema fingerprint")


def predict(model: TreeModel, db: Database, instance: int) -> Prediction:
    """Route one target-table row through the tree, computing features on demand."""
    check_compatible(model, db)
    return _predict_one(model, db, int(instance))


def predict_many(model: TreeModel, db: Database, instances) -> list[Prediction]:
    check_compatible(model, db)
    return [_predict_one(model, db, int(r)) for r in instances]


# ---------------------------------------------------------------------------
# Serialization


_AGG_BY_NAME = {name: agg for agg, name in AGG_NAMES.items()}


def _path_doc(path: JoinPath) -> dict:
    return {
        "start": path.start,
        "hops": [
            {
                "from_table": h.from_table,
                "from_column": h.from_column,
                "to_table": h.to_table,
                "to_column": h.to_column,
                "label": h.label,
                "many_to_one": h.many_to_one,
            }
            for h in path.hops
        ],
    }


def _path_from_doc(doc: dict) -> JoinPath:
    hops = tuple(
        Hop(
            from_table=h["from_table"],
            from_column=h["from_column"],
            to_table=h["to_table"],
            to_column=h["to_column"],
            label=h["label"],
            many_to_one=bool(h["many_to_one"]),
        )
        for h in doc["hops"]
    )
    return JoinPath(start=doc["start"], hops=hops, determinate=all(h.many_to_one for h in hops))


def _node_doc(node: TreeNode, desc_index: dict[FeatureDescriptor, int]) -> dict:
    if isinstance(node, LeafNode):
        return {"type": "leaf", "counts": list(node.counts), "prediction": node.prediction}
    t = node.test
    return {
        "type": "inner",
        "ig": node.ig,
        "test": {
            "descriptor": desc_index[t.descriptor],
            "kind": t.kind,
            "threshold": t.threshold,
            "value": t.value,
            "value_code": t.value_code,
            "undefined_route": t.undefined_route,
        },
        "left": _node_doc(node.left, desc_index),
        "right": _node_doc(node.right, desc_index),
    }


def _node_from_doc(doc: dict, descriptors: tuple[FeatureDescriptor, ...]) -> TreeNode:
    if doc["type"] == "leaf":
        return LeafNode(counts=tuple(int(c) for c in doc["counts"]), prediction=int(doc["prediction"]))
    if doc["type"] != "inner":
        raise ModelFormatError(f"unknown node type {doc['type']!r}")
    t = doc["test"]
    test = SplitTest(
        descriptor=descriptors[int(t["descriptor"])],
        kind=t["kind"],
        threshold=t["threshold"],
        value=t["value"],
        value_code=t["value_code"],
        undefined_route=t["undefined_route"],
    )
    return InnerNode(
        test=test,
        ig=float(doc["ig"]),
        left=_node_from_doc(doc["left"], descriptors),
        right=_node_from_doc(doc["right"], descriptors),
    )


def serialize_model(model: TreeModel) -> str:
    """Stable JSON rendering: equal models serialize byte-identically."""
    p = model.params
    desc_index = {d: i for i, d in enumerate(model.descriptors)}
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "mode": model.mode,
        "schema_fingerprint": model.schema_fingerprint,
        "class_labels": list(model.class_labels),
        "params": {
            "min_ig": p.min_ig,
            "min_inst": p.min_inst,
            "max_depth": None if math.isinf(p.max_depth) else p.max_depth,
            "strategy": p.strategy,
            "domsize_abs": p.domsize_abs,
            "domsize_rel": p.domsize_rel,
            "seed": p.seed,
        },
        "descriptors": [
            {
                "name": d.name,
                "path": _path_doc(d.path),
                "attribute": d.attribute,
                "agg": AGG_NAMES[d.agg],
                "value": d.value,
            }
            for d in model.descriptors
        ],
        "root": _node_doc(model.root, desc_index),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def deserialize_model(document: str) -> TreeModel:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        pd = doc["params"]
        params = LearnParams(
            min_ig=pd["min_ig"],
            min_inst=pd["min_inst"],
            max_depth=math.inf if pd["max_depth"] is None else float(pd["max_depth"]),
            strategy=pd["strategy"],
            domsize_abs=pd["domsize_abs"],
            domsize_rel=pd["domsize_rel"],
            seed=pd["seed"],
        )
        descriptors = tuple(
            FeatureDescriptor(
                path=_path_from_doc(d["path"]),
                attribute=d["attribute"],
                agg=_AGG_BY_NAME[d["agg"]],
                value=d["value"],
            )
            for d in doc["descriptors"]
        )
        root = _node_from_doc(doc["root"], descriptors)
        return TreeModel(
            root=root,
            params=params,
            mode=doc["mode"],
            class_labels=tuple(doc["class_labels"]),
            schema_fingerprint=doc["schema_fingerprint"],
            descriptors=descriptors,
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"invalid model document: {exc!r}") from exc
