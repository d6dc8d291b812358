"""Forward-only join paths and their cached per-instance instantiations.

A path starts at the target table and moves to strictly deeper tables without
revisiting any.  Reaching an associative link table immediately continues
through its remaining neighbors (lookahead); a path never terminates at an
associative table.  An instantiation stores, for each target instance, the
bag of terminal-table row ids it reaches, with multiplicities (bag semantics,
matching an SQL join without DISTINCT).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import SchemaCatalog, is_associative, neighbors, table_depths
from .storage import CategoricalColumn, Database, KeyColumn, NumericColumn


@dataclass(frozen=True)
class Hop:
    """One traversed edge; ``label`` is the edge's foreign-key column name.

    ``many_to_one`` is true when the hop lands on the destination table's
    primary key, so each source row matches at most one destination row.
    """

    from_table: str
    from_column: str
    to_table: str
    to_column: str
    label: str
    many_to_one: bool


@dataclass(frozen=True)
class JoinPath:
    start: str
    hops: tuple[Hop, ...] = ()
    determinate: bool = True

    @property
    def terminal_table(self) -> str:
        return self.hops[-1].to_table if self.hops else self.start

    @property
    def is_root(self) -> bool:
        return not self.hops

    def __len__(self) -> int:
        return len(self.hops)

    @property
    def tables(self) -> tuple[str, ...]:
        return (self.start,) + tuple(h.to_table for h in self.hops)

    def extended(self, hop: Hop) -> "JoinPath":
        if hop.from_table != self.terminal_table:
            raise ValueError(f"hop from {hop.from_table} does not start at terminal {self.terminal_table}")
        return JoinPath(self.start, self.hops + (hop,), self.determinate and hop.many_to_one)

    def prefix(self, n: int) -> "JoinPath":
        hops = self.hops[:n]
        return JoinPath(self.start, hops, all(h.many_to_one for h in hops))

    def render(self) -> str:
        return self.start + "".join(f"->{h.to_table}({h.label})" for h in self.hops)

    def sort_key(self):
        return (self.render(), tuple((h.from_table, h.from_column, h.to_table, h.to_column) for h in self.hops))


def empty_path(catalog: SchemaCatalog) -> JoinPath:
    return JoinPath(start=catalog.target_table)


def _hop_from(adj, table: str) -> Hop:
    return Hop(
        from_table=table,
        from_column=adj.column,
        to_table=adj.neighbor,
        to_column=adj.neighbor_column,
        label=adj.fk_column,
        many_to_one=adj.to_primary,
    )


def _grow_through_associative(catalog: SchemaCatalog, depths: dict[str, int], path: JoinPath) -> list[JoinPath]:
    """Continue ``path`` through associative terminals until it ends on a data table."""
    terminal = path.terminal_table
    if not is_associative(catalog, terminal):
        return [path]
    out: list[JoinPath] = []
    visited = set(path.tables)
    for adj in neighbors(catalog, terminal):
        if adj.neighbor in visited:
            continue
        if depths.get(adj.neighbor, -1) <= depths[terminal]:
            continue
        out.extend(_grow_through_associative(catalog, depths, path.extended(_hop_from(adj, terminal))))
    return out


def initial_paths(catalog: SchemaCatalog) -> list[JoinPath]:
    """Length-1 paths from the target table, with associative lookahead applied."""
    depths = table_depths(catalog)
    root = empty_path(catalog)
    out: list[JoinPath] = []
    for adj in neighbors(catalog, catalog.target_table):
        if adj.neighbor == catalog.target_table:
            continue  # self-joins are out of scope
        out.extend(_grow_through_associative(catalog, depths, root.extended(_hop_from(adj, catalog.target_table))))
    return sorted(out, key=JoinPath.sort_key)


def candidate_extensions(catalog: SchemaCatalog, path: JoinPath) -> list[JoinPath]:
    """One-step extensions of ``path``: unvisited, strictly deeper neighbors."""
    depths = table_depths(catalog)
    terminal = path.terminal_table
    visited = set(path.tables)
    out: list[JoinPath] = []
    for adj in neighbors(catalog, terminal):
        if adj.neighbor in visited:
            continue
        if depths.get(adj.neighbor, -1) <= depths[terminal]:
            continue
        out.extend(_grow_through_associative(catalog, depths, path.extended(_hop_from(adj, terminal))))
    return sorted(out, key=JoinPath.sort_key)


@dataclass(eq=False)
class JoinInstantiation:
    """Per-instance bags of terminal row ids, stored flat.

    ``instance_ids`` are ascending target-table row ids; instance ``i``'s bag
    is ``rows[offsets[i]:offsets[i+1]]``.
    """

    path: JoinPath
    instance_ids: np.ndarray
    offsets: np.ndarray
    rows: np.ndarray

    @property
    def n_instances(self) -> int:
        return len(self.instance_ids)

    def bag_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def bag(self, i: int) -> np.ndarray:
        return self.rows[self.offsets[i]:self.offsets[i + 1]]

    def restrict(self, instance_ids) -> "JoinInstantiation":
        """View of this instantiation over a subset of its instances."""
        ids = np.asarray(instance_ids, dtype=np.int64)
        pos = np.searchsorted(self.instance_ids, ids)
        if (pos >= len(self.instance_ids)).any() or not np.array_equal(self.instance_ids[pos], ids):
            raise ValueError("restrict: ids are not a subset of the instantiation's instances")
        starts = self.offsets[pos]
        lengths = self.offsets[pos + 1] - starts
        new_offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
        total = int(new_offsets[-1])
        if total:
            idx = np.arange(total, dtype=np.int64) - np.repeat(new_offsets[:-1], lengths) + np.repeat(starts, lengths)
            new_rows = self.rows[idx]
        else:
            new_rows = np.empty(0, dtype=np.int64)
        return JoinInstantiation(path=self.path, instance_ids=ids, offsets=new_offsets, rows=new_rows)


def root_instantiation(db: Database, instance_ids=None) -> JoinInstantiation:
    """Identity instantiation: each target instance maps to the singleton bag of itself."""
    target = db.catalog.target_table
    if instance_ids is None:
        ids = np.arange(db.tables[target].n_rows, dtype=np.int64)
    else:
        ids = np.sort(np.asarray(instance_ids, dtype=np.int64))
    return JoinInstantiation(
        path=empty_path(db.catalog),
        instance_ids=ids,
        offsets=np.arange(len(ids) + 1, dtype=np.int64),
        rows=ids.copy(),
    )


def extend_instantiation(db: Database, inst: JoinInstantiation, hop: Hop, restrict_to=None) -> JoinInstantiation:
    """Extend every bag by one hop; only the new hop's joins are computed.

    With ``restrict_to`` the extension covers only that instance subset.
    Each source terminal row costs one indexed lookup, which is recorded in
    ``db.stats`` under the extended path's length.
    """
    if inst.path.terminal_table != hop.from_table:
        raise ValueError(f"instantiation terminal {inst.path.terminal_table} != hop source {hop.from_table}")
    base = inst if restrict_to is None else inst.restrict(restrict_to)

    col = db.tables[hop.from_table].columns[hop.from_column]
    if not isinstance(col, KeyColumn):
        raise ValueError(f"{hop.from_table}.{hop.from_column} is not a key column")
    index = db.indexes[(hop.to_table, hop.to_column)]

    codes = col.codes[base.rows]
    starts = index.starts[codes]
    lengths = index.starts[codes + 1] - starts
    cum = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    total = int(cum[-1])
    if total:
        idx = np.arange(total, dtype=np.int64) - np.repeat(cum[:-1], lengths) + np.repeat(starts, lengths)
        new_rows = index.rows[idx]
    else:
        new_rows = np.empty(0, dtype=np.int64)
    new_offsets = cum[base.offsets]

    new_path = base.path.extended(hop)
    db.stats.count_lookups(len(new_path.hops), len(base.rows))
    return JoinInstantiation(path=new_path, instance_ids=base.instance_ids, offsets=new_offsets, rows=new_rows)


@dataclass(eq=False)
class ValueBags:
    """Per-instance multisets of one terminal attribute, missing marked separately."""

    offsets: np.ndarray
    kind: str  # "numeric" | "categorical"
    values: np.ndarray  # float64 values or int64 codes
    missing: np.ndarray
    dictionary: tuple[str, ...] | None = None


def project_values(db: Database, inst: JoinInstantiation, attribute: str) -> ValueBags:
    """The multiset of attribute values over each instance's bag.

    Source missing values are included as explicit missing markers.
    """
    col = db.tables[inst.path.terminal_table].columns[attribute]
    if isinstance(col, KeyColumn):
        raise ValueError(f"{inst.path.terminal_table}.{attribute} is a key column, not an attribute")
    if isinstance(col, NumericColumn):
        return ValueBags(offsets=inst.offsets, kind="numeric", values=col.values[inst.rows], missing=col.missing[inst.rows])
    assert isinstance(col, CategoricalColumn)
    return ValueBags(
        offsets=inst.offsets,
        kind="categorical",
        values=col.codes[inst.rows],
        missing=col.missing[inst.rows],
        dictionary=col.dictionary,
    )


def instantiate(db: Database, path: JoinPath, cache: dict[JoinPath, JoinInstantiation]) -> JoinInstantiation:
    """Instantiation for ``path``, reusing the longest cached prefix.

    ``cache`` must hold at least the empty path's instantiation; every prefix
    built along the way is cached too, so sibling extensions share work.
    """
    if path in cache:
        return cache[path]
    n = len(path.hops)
    i = n - 1
    while i > 0 and path.prefix(i) not in cache:
        i -= 1
    inst = cache[path.prefix(i)]
    for j in range(i, n):
        inst = extend_instantiation(db, inst, path.hops[j])
        cache[inst.path] = inst
    return inst
