"""Aggregation of per-instance multisets into feature columns.

Determinate paths yield one identity feature per attribute.  Non-determinate
paths yield an is-empty flag for the path plus, per attribute, the numeric
aggregate family (avg, std, var, max, min, sum, count) or the categorical
family (count, distinct count, and contains-value booleans when the
attribute's base-table domain is small enough).

``count`` covers the full multiset including missing markers; every other
aggregate is computed on the sub-multiset that excludes missing values.  A
cell is undefined when the bag is empty, or when every element is missing
(count excepted, distinct count excepted: those stay defined).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .joinpath import JoinInstantiation, JoinPath, project_values
from .params import LearnParams
from .storage import CategoricalColumn, Database, NumericColumn


class Agg(enum.IntEnum):
    """Aggregator identifiers; enum order is the canonical column order."""

    IDENTITY = 0
    AVG = 1
    STD = 2
    VAR = 3
    MAX = 4
    MIN = 5
    SUM = 6
    COUNT = 7
    DISTINCT_COUNT = 8
    CONTAINS = 9
    IS_EMPTY = 10


AGG_NAMES = {
    Agg.IDENTITY: "identity",
    Agg.AVG: "avg",
    Agg.STD: "std",
    Agg.VAR: "var",
    Agg.MAX: "max",
    Agg.MIN: "min",
    Agg.SUM: "sum",
    Agg.COUNT: "count",
    Agg.DISTINCT_COUNT: "distinct_count",
    Agg.CONTAINS: "contains",
    Agg.IS_EMPTY: "is_empty",
}

NUMERIC = "numeric"
CATEGORICAL = "categorical"
BOOLEAN = "boolean"


@dataclass(frozen=True)
class FeatureDescriptor:
    """Identity of one feature: a path, an optional attribute, an aggregator.

    The is-empty feature attaches to the path alone (``attribute is None``);
    contains features carry the tested value.  Descriptors are totally
    ordered by (rendered path, attribute, aggregator, contains value).
    """

    path: JoinPath
    attribute: str | None
    agg: Agg
    value: str | None = None

    @property
    def name(self) -> str:
        base = self.path.render()
        if self.agg is Agg.IS_EMPTY:
            return f"{base}.:is_empty"
        if self.agg is Agg.CONTAINS:
            return f"{base}.{self.attribute}:contains={self.value}"
        return f"{base}.{self.attribute}:{AGG_NAMES[self.agg]}"

    def sort_key(self):
        return (*self.path.sort_key(), self.attribute or "", int(self.agg), self.value or "")


@dataclass(eq=False)
class FeatureColumn:
    """Per-instance cells of one feature; ``defined`` masks undefined cells."""

    descriptor: FeatureDescriptor
    kind: str  # NUMERIC | CATEGORICAL | BOOLEAN
    values: np.ndarray
    defined: np.ndarray
    dictionary: tuple[str, ...] | None = None

    def __len__(self) -> int:
        return len(self.values)

    def take(self, idx) -> "FeatureColumn":
        return FeatureColumn(
            descriptor=self.descriptor,
            kind=self.kind,
            values=self.values[idx],
            defined=self.defined[idx],
            dictionary=self.dictionary,
        )


# ---------------------------------------------------------------------------
# Scalar aggregation (single multiset).  Missing markers are None.


@dataclass(frozen=True)
class NumericAggregates:
    avg: float | None
    std: float | None
    var: float | None
    max: float | None
    min: float | None
    sum: float | None
    count: int | None


@dataclass(frozen=True)
class CategoricalAggregates:
    count: int | None
    distinct_count: int | None
    contains: dict[str, bool | None] | None


def aggregate_numeric(values: Iterable[float | None]) -> NumericAggregates:
    """Numeric aggregate family over one multiset; None fields are undefined.

    Sums run sequentially in multiset order so results are bit-identical to
    the columnar pipeline; predictions computed on demand then route exactly
    like the materialized cells they were trained on.
    """
    vals = list(values)
    n = len(vals)
    if n == 0:
        return NumericAggregates(None, None, None, None, None, None, None)
    present = [float(v) for v in vals if v is not None]
    if not present:
        return NumericAggregates(None, None, None, None, None, None, n)
    k = len(present)
    total = 0.0
    for x in present:
        total += x
    avg = total / k
    squares = 0.0
    for x in present:
        d = x - avg
        squares += d * d
    var = max(squares / k, 0.0)  # population variance
    return NumericAggregates(
        avg=avg,
        std=math.sqrt(var),
        var=var,
        max=max(present),
        min=min(present),
        sum=total,
        count=n,
    )


def aggregate_categorical(
    values: Iterable[str | None], domain: Iterable[str], emit_contains: bool
) -> CategoricalAggregates:
    """Categorical aggregate family over one multiset.

    ``domain`` is the attribute's full base-table dictionary; contains cells
    are produced for every domain value when ``emit_contains`` is set.
    """
    vals = list(values)
    dom = list(domain)
    n = len(vals)
    if n == 0:
        contains = {v: None for v in dom} if emit_contains else None
        return CategoricalAggregates(None, None, contains)
    present = {v for v in vals if v is not None}
    if emit_contains:
        contains = {v: (v in present) if present else None for v in dom}
    else:
        contains = None
    return CategoricalAggregates(count=n, distinct_count=len(present), contains=contains)


def contains_enabled(domain_size: int, table_rows: int, params: LearnParams) -> bool:
    """Contains features apply only to domains strictly below both thresholds.

    Sizes are measured on the attribute's full base table, not the joined bag.
    """
    return domain_size < params.domsize_abs and domain_size < params.domsize_rel * table_rows


# ---------------------------------------------------------------------------
# Vectorized aggregation over all instances of an instantiation.


def _segment_ids(lengths: np.ndarray) -> np.ndarray:
    return np.repeat(np.arange(len(lengths), dtype=np.int64), lengths)


def _numeric_columns(path: JoinPath, attr: str, bags) -> list[FeatureColumn]:
    n = len(bags.offsets) - 1
    lengths = np.diff(bags.offsets)
    seg = _segment_ids(lengths)
    nm = ~bags.missing
    seg_nm = seg[nm]
    vals_nm = bags.values[nm]

    k = np.bincount(seg_nm, minlength=n).astype(np.float64)
    has_vals = k > 0
    s = np.bincount(seg_nm, weights=vals_nm, minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        avg = s / k
    dev = vals_nm - avg[seg_nm]
    with np.errstate(invalid="ignore", divide="ignore"):
        var = np.bincount(seg_nm, weights=dev * dev, minlength=n) / k
    var = np.where(has_vals, np.maximum(var, 0.0), np.nan)
    std = np.sqrt(var)
    mx = np.full(n, -np.inf)
    np.maximum.at(mx, seg_nm, vals_nm)
    mn = np.full(n, np.inf)
    np.minimum.at(mn, seg_nm, vals_nm)

    nonempty = lengths > 0
    cells = [
        (Agg.AVG, avg, has_vals),
        (Agg.STD, std, has_vals),
        (Agg.VAR, var, has_vals),
        (Agg.MAX, mx, has_vals),
        (Agg.MIN, mn, has_vals),
        (Agg.SUM, s, has_vals),
        (Agg.COUNT, lengths.astype(np.float64), nonempty),
    ]
    return [
        FeatureColumn(
            descriptor=FeatureDescriptor(path=path, attribute=attr, agg=agg),
            kind=NUMERIC,
            values=np.where(defined, values, np.nan),
            defined=defined.copy(),
        )
        for agg, values, defined in cells
    ]


def _categorical_columns(path: JoinPath, attr: str, bags, emit_contains: bool) -> list[FeatureColumn]:
    n = len(bags.offsets) - 1
    lengths = np.diff(bags.offsets)
    seg = _segment_ids(lengths)
    nm = ~bags.missing
    seg_nm = seg[nm]
    codes_nm = bags.values[nm]
    dom = bags.dictionary or ()
    k_dom = len(dom)

    nonempty = lengths > 0
    k_nm = np.bincount(seg_nm, minlength=n)
    has_vals = k_nm > 0

    if k_dom and seg_nm.size:
        pair = seg_nm * k_dom + codes_nm
        uniq = np.unique(pair)
        distinct = np.bincount(uniq // k_dom, minlength=n).astype(np.float64)
    else:
        distinct = np.zeros(n, dtype=np.float64)

    cols = [
        FeatureColumn(
            descriptor=FeatureDescriptor(path=path, attribute=attr, agg=Agg.COUNT),
            kind=NUMERIC,
            values=np.where(nonempty, lengths.astype(np.float64), np.nan),
            defined=nonempty.copy(),
        ),
        FeatureColumn(
            descriptor=FeatureDescriptor(path=path, attribute=attr, agg=Agg.DISTINCT_COUNT),
            kind=NUMERIC,
            values=np.where(nonempty, distinct, np.nan),
            defined=nonempty.copy(),
        ),
    ]
    if emit_contains:
        present = np.zeros((n, k_dom), dtype=bool)
        if k_dom and seg_nm.size:
            present[seg_nm, codes_nm] = True
        for code, value in enumerate(dom):
            cols.append(
                FeatureColumn(
                    descriptor=FeatureDescriptor(path=path, attribute=attr, agg=Agg.CONTAINS, value=value),
                    kind=BOOLEAN,
                    values=present[:, code].copy(),
                    defined=has_vals.copy(),
                )
            )
    return cols


def _identity_columns(db: Database, inst: JoinInstantiation, attrs) -> list[FeatureColumn]:
    n = inst.n_instances
    lengths = inst.bag_sizes()
    if lengths.size and lengths.max() > 1:
        raise AssertionError(f"determinate path {inst.path.render()} produced a bag of size > 1")
    has = lengths > 0
    first = np.zeros(n, dtype=np.int64)
    first[has] = inst.rows[inst.offsets[:-1][has]]

    table = db.tables[inst.path.terminal_table]
    out: list[FeatureColumn] = []
    for spec in attrs:
        col = table.columns[spec.name]
        desc = FeatureDescriptor(path=inst.path, attribute=spec.name, agg=Agg.IDENTITY)
        if isinstance(col, NumericColumn):
            defined = has & ~col.missing[first]
            values = np.where(defined, col.values[first], np.nan)
            out.append(FeatureColumn(descriptor=desc, kind=NUMERIC, values=values, defined=defined))
        else:
            assert isinstance(col, CategoricalColumn)
            defined = has & ~col.missing[first]
            values = np.where(defined, col.codes[first], -1).astype(np.int64)
            out.append(
                FeatureColumn(
                    descriptor=desc, kind=CATEGORICAL, values=values, defined=defined, dictionary=col.dictionary
                )
            )
    return out


def features_for_path(db: Database, inst: JoinInstantiation, params: LearnParams) -> list[FeatureColumn]:
    """All feature columns a path defines for the instances of ``inst``.

    Determinate path: one identity column per non-key attribute.
    Non-determinate path: one is-empty column plus the aggregate families.
    Columns come out in descriptor order.  The target attribute is never a
    feature.
    """
    path = inst.path
    schema = db.catalog.table(path.terminal_table)
    table = db.tables[path.terminal_table]
    attrs = [c for c in schema.columns if not c.is_key and c.name in table.columns]
    if path.is_root:
        attrs = [c for c in attrs if c.name != db.catalog.target_attribute]

    if path.determinate:
        cols = _identity_columns(db, inst, attrs)
    else:
        n = inst.n_instances
        lengths = inst.bag_sizes()
        cols = [
            FeatureColumn(
                descriptor=FeatureDescriptor(path=path, attribute=None, agg=Agg.IS_EMPTY),
                kind=BOOLEAN,
                values=(lengths == 0),
                defined=np.ones(n, dtype=bool),
            )
        ]
        for spec in attrs:
            bags = project_values(db, inst, spec.name)
            if bags.kind == "numeric":
                cols.extend(_numeric_columns(path, spec.name, bags))
            else:
                emit = contains_enabled(len(bags.dictionary or ()), table.n_rows, params)
                cols.extend(_categorical_columns(path, spec.name, bags, emit))

    cols.sort(key=lambda c: c.descriptor.sort_key())
    db.stats.count_features(None if path.is_root else path.render(), [c.descriptor.name for c in cols])
    return cols
