"""Relational schema catalog: tables, typed columns, and the foreign-key graph.

A schema file is a YAML document of the form::

    target: Professor.popular
    tables:
      - name: Professor
        file: professor.csv
        columns:
          - PID: pk
          - MID: fk(Movie.MID)
          - popular: cat

Column types are ``pk`` (primary key), ``fk(Table.Column)`` (foreign key),
``num`` (numeric attribute) and ``cat`` (categorical attribute).  Foreign-key
edges are treated as undirected for traversal purposes; direction only
matters for join multiplicity.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from collections import deque
from dataclasses import dataclass

import yaml

logger = logging.getLogger(__name__)


class SchemaError(ValueError):
    """Malformed or invalid schema description."""


KIND_PRIMARY_KEY = "primary_key"
KIND_FOREIGN_KEY = "foreign_key"
KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"

_TYPE_ALIASES = {"pk": KIND_PRIMARY_KEY, "num": KIND_NUMERIC, "cat": KIND_CATEGORICAL}
_FK_RE = re.compile(r"^fk\(\s*([A-Za-z_]\w*)\s*\.\s*([A-Za-z_]\w*)\s*\)$")
_NAME_RE = re.compile(r"^[A-Za-z_]\w*$")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    ref_table: str | None = None
    ref_column: str | None = None

    @property
    def is_key(self) -> bool:
        return self.kind in (KIND_PRIMARY_KEY, KIND_FOREIGN_KEY)


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: tuple[ColumnSpec, ...]
    source_file: str

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise SchemaError(f"table {self.name} has no column {name!r}")

    @property
    def primary_key(self) -> ColumnSpec:
        for c in self.columns:
            if c.kind == KIND_PRIMARY_KEY:
                return c
        raise SchemaError(f"table {self.name} has no primary key")

    @property
    def foreign_keys(self) -> tuple[ColumnSpec, ...]:
        return tuple(c for c in self.columns if c.kind == KIND_FOREIGN_KEY)


@dataclass(frozen=True)
class FkEdge:
    """One foreign-key link; ``fk_table.fk_column`` references ``pk_table.pk_column``."""

    fk_table: str
    fk_column: str
    pk_table: str
    pk_column: str


@dataclass(frozen=True)
class Adjacency:
    """One traversable edge endpoint as seen from ``table``.

    ``to_primary`` is true when the far side is the neighbor's primary key,
    i.e. the hop is many-to-one.  ``fk_column`` names the foreign-key column
    of the underlying edge and is used to label hops in rendered path names.
    """

    table: str
    column: str
    neighbor: str
    neighbor_column: str
    fk_column: str
    to_primary: bool


@dataclass(frozen=True)
class SchemaCatalog:
    tables: tuple[TableSchema, ...]
    target_table: str
    target_attribute: str
    fk_edges: tuple[FkEdge, ...]
    unreachable: tuple[str, ...] = ()

    def table(self, name: str) -> TableSchema:
        for t in self.tables:
            if t.name == name:
                return t
        raise SchemaError(f"unknown table {name!r}")

    @property
    def table_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)


def _parse_column(table: str, name, type_str) -> ColumnSpec:
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise SchemaError(f"table {table}: bad column name {name!r}")
    if not isinstance(type_str, str):
        raise SchemaError(f"table {table} column {name}: bad type {type_str!r}")
    t = type_str.strip()
    if t in _TYPE_ALIASES:
        return ColumnSpec(name=name, kind=_TYPE_ALIASES[t])
    m = _FK_RE.match(t)
    if m:
        return ColumnSpec(name=name, kind=KIND_FOREIGN_KEY, ref_table=m.group(1), ref_column=m.group(2))
    raise SchemaError(f"table {table} column {name}: unknown type {type_str!r}")


def _parse_columns(table: str, raw) -> list[ColumnSpec]:
    cols: list[ColumnSpec] = []
    if isinstance(raw, dict):
        items = list(raw.items())
    elif isinstance(raw, list):
        items = []
        for entry in raw:
            if isinstance(entry, dict) and len(entry) == 1:
                items.append(next(iter(entry.items())))
            elif isinstance(entry, str) and ":" in entry:
                n, _, t = entry.partition(":")
                items.append((n.strip(), t.strip()))
            else:
                raise SchemaError(f"table {table}: bad column entry {entry!r}")
    else:
        raise SchemaError(f"table {table}: columns must be a list or mapping")
    for name, type_str in items:
        cols.append(_parse_column(table, name, type_str))
    return cols


def catalog_from_dict(doc, source: str = "<schema>") -> SchemaCatalog:
    """Validate a parsed schema document and build the catalog."""
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: schema document must be a mapping")
    target = doc.get("target")
    if not isinstance(target, str) or target.count(".") != 1:
        raise SchemaError(f"{source}: 'target' must be 'Table.Column'")
    target_table, target_attribute = target.split(".")

    raw_tables = doc.get("tables")
    if not isinstance(raw_tables, list) or not raw_tables:
        raise SchemaError(f"{source}: 'tables' must be a non-empty list")

    tables: list[TableSchema] = []
    for entry in raw_tables:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaError(f"{source}: each table needs a 'name'")
        name = entry["name"]
        if not isinstance(name, str) or not _NAME_RE.match(name):
            raise SchemaError(f"{source}: bad table name {name!r}")
        cols = _parse_columns(name, entry.get("columns", []))
        tables.append(TableSchema(name=name, columns=tuple(cols), source_file=str(entry.get("file", f"{name.lower()}.csv"))))

    by_name: dict[str, TableSchema] = {}
    for t in tables:
        if t.name in by_name:
            raise SchemaError(f"duplicate table name {t.name!r}")
        by_name[t.name] = t

    for t in tables:
        seen = set()
        for c in t.columns:
            if c.name in seen:
                raise SchemaError(f"table {t.name}: duplicate column {c.name!r}")
            seen.add(c.name)
        pks = [c for c in t.columns if c.kind == KIND_PRIMARY_KEY]
        if len(pks) != 1:
            raise SchemaError(f"table {t.name}: expected exactly one primary key, found {len(pks)}")

    # FK targets must be existing primary keys (single-column keys only).
    edges: list[FkEdge] = []
    for t in tables:
        for c in t.columns:
            if c.kind != KIND_FOREIGN_KEY:
                continue
            ref = by_name.get(c.ref_table)
            if ref is None:
                raise SchemaError(f"foreign key {t.name}.{c.name} references unknown table {c.ref_table!r}")
            ref_col = next((rc for rc in ref.columns if rc.name == c.ref_column), None)
            if ref_col is None:
                raise SchemaError(f"foreign key {t.name}.{c.name} references unknown column {c.ref_table}.{c.ref_column}")
            if ref_col.kind != KIND_PRIMARY_KEY:
                raise SchemaError(
                    f"foreign key {t.name}.{c.name} must reference a primary key, "
                    f"but {c.ref_table}.{c.ref_column} is {ref_col.kind}"
                )
            edges.append(FkEdge(fk_table=t.name, fk_column=c.name, pk_table=c.ref_table, pk_column=c.ref_column))

    if target_table not in by_name:
        raise SchemaError(f"target table {target_table!r} does not exist")
    tcol = next((c for c in by_name[target_table].columns if c.name == target_attribute), None)
    if tcol is None:
        raise SchemaError(f"target attribute {target_table}.{target_attribute} does not exist")
    if tcol.kind != KIND_CATEGORICAL:
        raise SchemaError(f"target attribute {target_table}.{target_attribute} must be categorical, is {tcol.kind}")

    # Drop tables unreachable from the target (they can contribute no features).
    adj: dict[str, set[str]] = {t.name: set() for t in tables}
    for e in edges:
        adj[e.fk_table].add(e.pk_table)
        adj[e.pk_table].add(e.fk_table)
    reachable = {target_table}
    queue = deque([target_table])
    while queue:
        cur = queue.popleft()
        for nxt in adj[cur]:
            if nxt not in reachable:
                reachable.add(nxt)
                queue.append(nxt)
    unreachable = tuple(t.name for t in tables if t.name not in reachable)
    if unreachable:
        logger.warning("%s: ignoring tables unreachable from %s: %s", source, target_table, ", ".join(unreachable))
        tables = [t for t in tables if t.name in reachable]
        edges = [e for e in edges if e.fk_table in reachable and e.pk_table in reachable]

    return SchemaCatalog(
        tables=tuple(tables),
        target_table=target_table,
        target_attribute=target_attribute,
        fk_edges=tuple(edges),
        unreachable=unreachable,
    )


def load_schema(path) -> SchemaCatalog:
    """Load and validate a schema description file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise SchemaError(f"cannot parse schema file {path}: {exc}") from exc
    return catalog_from_dict(doc, source=str(path))


def table_depths(catalog: SchemaCatalog) -> dict[str, int]:
    """Shortest-hop distance of every reachable table from the target table."""
    adj: dict[str, set[str]] = {t.name: set() for t in catalog.tables}
    for e in catalog.fk_edges:
        adj[e.fk_table].add(e.pk_table)
        adj[e.pk_table].add(e.fk_table)
    depths = {catalog.target_table: 0}
    queue = deque([catalog.target_table])
    while queue:
        cur = queue.popleft()
        for nxt in sorted(adj[cur]):
            if nxt not in depths:
                depths[nxt] = depths[cur] + 1
                queue.append(nxt)
    return depths


def neighbors(catalog: SchemaCatalog, table: str) -> list[Adjacency]:
    """All traversable edge endpoints incident to ``table``.

    An edge between the same table pair on different column pairs yields
    distinct entries.
    """
    catalog.table(table)  # raises on unknown table
    out: list[Adjacency] = []
    for e in catalog.fk_edges:
        if e.fk_table == table:
            out.append(Adjacency(table, e.fk_column, e.pk_table, e.pk_column, e.fk_column, to_primary=True))
        if e.pk_table == table:
            out.append(Adjacency(table, e.pk_column, e.fk_table, e.fk_column, e.fk_column, to_primary=False))
    return out


def is_associative(catalog: SchemaCatalog, table: str) -> bool:
    """True for pure link tables: only key columns, at least two foreign keys."""
    ts = catalog.table(table)
    if any(not c.is_key for c in ts.columns):
        return False
    return len(ts.foreign_keys) >= 2


def fingerprint(catalog: SchemaCatalog) -> str:
    """Stable hash of the schema structure (not the data)."""
    doc = {
        "target": f"{catalog.target_table}.{catalog.target_attribute}",
        "tables": [
            {
                "name": t.name,
                "columns": [
                    {"name": c.name, "kind": c.kind, "ref": [c.ref_table, c.ref_column] if c.ref_table else None}
                    for c in t.columns
                ],
            }
            for t in catalog.tables
        ],
    }
    blob = json.dumps(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()
