"""Relational catalog: typed CSV ingestion, dictionary encoding, FK graph.

Every column is dictionary-encoded: the distinct values are sorted by their
natural order and replaced by dense integer codes, so range predicates map to
contiguous code intervals.  Dates are stored as days since 1970-01-01, floats
are quantized to a fixed per-column decimal step so the whole engine only ever
sees integer-backed domains.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError

EPOCH_ORDINAL = date(1970, 1, 1).toordinal()
MAX_FLOAT_DECIMALS = 6

_INT_RE = re.compile(r"[+-]?\d+\Z")
_FLOAT_RE = re.compile(r"[+-]?\d+\.(\d+)\Z")
_DATE_RE = re.compile(r"(\d{2})\.(\d{2})\.(\d{4})\Z")

CATEGORICAL = "categorical"
INTEGER = "integer"
FLOAT = "float"
DATE = "date"


@dataclass(frozen=True)
class AttributeType:
    """Column type; ``scale`` is the decimal quantization exponent for floats."""

    kind: str
    scale: int = 0

    @property
    def numeric(self) -> bool:
        """True for types that may serve as an aggregation attribute."""
        return self.kind in (INTEGER, FLOAT, DATE)


@dataclass(frozen=True)
class ForeignKey:
    attribute: str
    ref_relation: str
    ref_attribute: str


@dataclass
class Schema:
    relation: str
    attributes: list[tuple[str, AttributeType]]
    primary_key: str | None = None
    foreign_keys: list[ForeignKey] = field(default_factory=list)

    def attribute_type(self, name: str) -> AttributeType:
        for attr, atype in self.attributes:
            if attr == name:
                return atype
        raise DataError(f"relation {self.relation!r} has no attribute {name!r}")

    def attribute_names(self) -> list[str]:
        return [name for name, _ in self.attributes]

    def has_attribute(self, name: str) -> bool:
        return any(attr == name for attr, _ in self.attributes)


def parse_date(text: str) -> int:
    """dd.mm.yyyy -> days since epoch; raises ValueError on anything else."""
    m = _DATE_RE.match(text)
    if not m:
        raise ValueError(f"not a dd.mm.yyyy date: {text!r}")
    day, month, year = int(m.group(1)), int(m.group(2)), int(m.group(3))
    return date(year, month, day).toordinal() - EPOCH_ORDINAL


def format_date(days: int) -> str:
    d = date.fromordinal(int(days) + EPOCH_ORDINAL)
    return f"{d.day:02d}.{d.month:02d}.{d.year:04d}"


def _float_decimals(text: str) -> int | None:
    m = _FLOAT_RE.match(text)
    if m:
        return len(m.group(1))
    if _INT_RE.match(text):
        return 0
    return None


class Column:
    """One dictionary-encoded column.

    ``codes`` holds one dense code per row; ``values`` is the sorted array of
    distinct internal values (scaled integers for floats, day numbers for
    dates).  NULLs get the reserved sentinel code ``len(values)``, which
    participates in statistics but never matches a predicate.
    """

    def __init__(self, name: str, attr_type: AttributeType,
                 codes: np.ndarray, values: np.ndarray, has_null: bool):
        self.name = name
        self.attr_type = attr_type
        self.codes = codes
        self.values = values
        self.has_null = has_null
        self._decoded: np.ndarray | None = None

    @property
    def n_values(self) -> int:
        return len(self.values)

    @property
    def card(self) -> int:
        """Distinct count including the NULL sentinel when present."""
        return self.n_values + (1 if self.has_null else 0)

    @property
    def null_code(self) -> int | None:
        return self.n_values if self.has_null else None

    @property
    def decoded(self) -> np.ndarray:
        """Sorted distinct values in user space (floats descaled)."""
        if self._decoded is None:
            if self.attr_type.kind == FLOAT:
                self._decoded = self.values / (10.0 ** self.attr_type.scale)
            else:
                self._decoded = self.values
        return self._decoded

    def decode_code(self, code: int):
        """Code -> python value; NULL sentinel -> None."""
        if self.has_null and code == self.n_values:
            return None
        value = self.decoded[code]
        if self.attr_type.kind == CATEGORICAL:
            return str(value)
        if self.attr_type.kind == FLOAT:
            return float(value)
        return int(value)

    def encode_eq(self, value) -> int | None:
        """Value -> code, or None when the value never occurs."""
        dom = self.decoded
        pos = int(np.searchsorted(dom, value, side="left"))
        if pos < len(dom) and dom[pos] == value:
            return pos
        return None

    def search_left(self, value) -> int:
        return int(np.searchsorted(self.decoded, value, side="left"))

    def search_right(self, value) -> int:
        return int(np.searchsorted(self.decoded, value, side="right"))

    def sliced(self, lo: int, hi: int) -> "Column":
        col = Column(self.name, self.attr_type, self.codes[lo:hi],
                     self.values, self.has_null)
        col._decoded = self._decoded
        return col

    def taken(self, rows: np.ndarray, name: str | None = None) -> "Column":
        col = Column(name or self.name, self.attr_type, self.codes[rows],
                     self.values, self.has_null)
        col._decoded = self._decoded
        return col


class Table:
    """Immutable dictionary-encoded relation (or a materialized join slice).

    ``attr_map`` routes (relation, attribute) pairs to column names; for plain
    relations it is the identity, for pre-joined tables it resolves qualified
    names from both sides.
    """

    def __init__(self, schema: Schema, columns: dict[str, Column], n_rows: int,
                 attr_map: dict[tuple[str, str], str] | None = None):
        self.schema = schema
        self.columns = columns
        self.n_rows = n_rows
        if attr_map is None:
            attr_map = {(schema.relation, name): name for name in columns}
        self.attr_map = attr_map

    @property
    def name(self) -> str:
        return self.schema.relation

    def column(self, name: str) -> Column:
        return self.columns[name]

    def column_for(self, relation: str, attribute: str) -> Column:
        return self.columns[self.attr_map[(relation, attribute)]]

    def covers(self, relation: str) -> bool:
        return any(rel == relation for rel, _ in self.attr_map)

    def sliced(self, lo: int, hi: int) -> "Table":
        cols = {name: col.sliced(lo, hi) for name, col in self.columns.items()}
        return Table(self.schema, cols, hi - lo, dict(self.attr_map))


def infer_schema(raw_text: str, relation: str = "table") -> Schema:
    """Infer a schema from CSV text (header plus sampled data rows).

    Each column gets the narrowest type matching every non-empty sampled cell,
    tried in the order integer, float, date, categorical.  Keys are not
    inferred; declare them separately.
    """
    reader = csv.reader(io.StringIO(raw_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file: no header row") from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header):
        dupes = sorted({h for h in header if header.count(h) > 1})
        raise DataError(f"duplicate header names: {', '.join(dupes)}")
    if not header or header == [""]:
        raise DataError("empty file: no header row")

    can_int = [True] * len(header)
    can_float = [True] * len(header)
    can_date = [True] * len(header)
    decimals = [0] * len(header)
    for row in reader:
        for i, cell in enumerate(row[:len(header)]):
            cell = cell.strip()
            if cell == "":
                continue
            if can_int[i] and not _INT_RE.match(cell):
                can_int[i] = False
            if can_float[i]:
                dec = _float_decimals(cell)
                if dec is None:
                    can_float[i] = False
                else:
                    decimals[i] = max(decimals[i], dec)
            if can_date[i] and not _DATE_RE.match(cell):
                can_date[i] = False

    attributes: list[tuple[str, AttributeType]] = []
    for i, name in enumerate(header):
        if can_int[i]:
            atype = AttributeType(INTEGER)
        elif can_float[i]:
            atype = AttributeType(FLOAT, min(decimals[i], MAX_FLOAT_DECIMALS))
        elif can_date[i]:
            atype = AttributeType(DATE)
        else:
            atype = AttributeType(CATEGORICAL)
        attributes.append((name, atype))
    return Schema(relation=relation, attributes=attributes)


def infer_schema_from_file(path: str | Path, relation: str | None = None,
                           sample_rows: int = 10_000) -> Schema:
    path = Path(path)
    if relation is None:
        relation = path.stem
    lines: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for i, line in enumerate(fh):
            if i > sample_rows:
                break
            lines.append(line)
    return infer_schema("".join(lines), relation=relation)


def _parse_cell(cell: str, atype: AttributeType):
    """Raw text -> internal value (int for integer/date/scaled float)."""
    if atype.kind == INTEGER:
        if not _INT_RE.match(cell):
            raise ValueError(f"not an integer: {cell!r}")
        return int(cell)
    if atype.kind == FLOAT:
        dec = _float_decimals(cell)
        if dec is None:
            raise ValueError(f"not a plain decimal: {cell!r}")
        if dec > MAX_FLOAT_DECIMALS:
            cell = cell[:len(cell) - (dec - MAX_FLOAT_DECIMALS)]
        sign = -1 if cell.startswith("-") else 1
        body = cell.lstrip("+-")
        if "." in body:
            whole, frac = body.split(".")
        else:
            whole, frac = body, ""
        frac = frac.ljust(atype.scale, "0")[:atype.scale]
        return sign * int(whole + frac) if whole + frac else 0
    if atype.kind == DATE:
        return parse_date(cell)
    return cell


def load_table(path: str | Path, schema: Schema) -> Table:
    """Load and dictionary-encode a CSV file against a declared schema."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    names = schema.attribute_names()
    raw: list[list] = [[] for _ in names]
    nulls: list[list[int]] = [[] for _ in names]
    n_rows = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if [h.strip() for h in header] != names:
            raise DataError(
                f"{path}: header {header!r} does not match schema attributes {names!r}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise DataError(
                    f"{path}: row {rowno}: expected {len(names)} cells, got {len(row)}")
            for i, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    nulls[i].append(n_rows)
                    continue
                try:
                    raw[i].append(_parse_cell(cell, schema.attributes[i][1]))
                except ValueError as exc:
                    raise DataError(f"{path}: row {rowno}, column "
                                    f"{names[i]!r}: {exc}") from None
            n_rows += 1

    columns: dict[str, Column] = {}
    for i, (name, atype) in enumerate(schema.attributes):
        has_null = bool(nulls[i])
        present = raw[i]
        if atype.kind == CATEGORICAL:
            arr = np.array(present, dtype=str) if present else np.array([], dtype="U1")
        else:
            arr = np.array(present, dtype=np.int64)
        values = np.unique(arr)
        codes = np.full(n_rows, len(values), dtype=np.int64)
        mask = np.ones(n_rows, dtype=bool)
        if has_null:
            mask[np.array(nulls[i], dtype=np.int64)] = False
        if present:
            codes[mask] = np.searchsorted(values, arr)
        columns[name] = Column(name, atype, codes, values, has_null)
    return Table(schema, columns, n_rows)


@dataclass(frozen=True)
class FkEdge:
    """Directed edge from the referencing relation to the referenced one."""

    from_relation: str
    from_attribute: str
    to_relation: str
    to_attribute: str


class FkGraph:
    def __init__(self, edges: list[FkEdge], relations: list[str]):
        self.edges = edges
        self.relations = relations

    def edges_of(self, relation: str) -> list[FkEdge]:
        return [e for e in self.edges
                if e.from_relation == relation or e.to_relation == relation]

    def find_edge(self, rel_a: str, attr_a: str, rel_b: str, attr_b: str) -> FkEdge | None:
        """Match a join-condition pair against the declared edges, either direction."""
        for e in self.edges:
            if (e.from_relation, e.from_attribute, e.to_relation, e.to_attribute) == \
                    (rel_a, attr_a, rel_b, attr_b):
                return e
            if (e.from_relation, e.from_attribute, e.to_relation, e.to_attribute) == \
                    (rel_b, attr_b, rel_a, attr_a):
                return e
        return None

    def neighbors(self, relation: str) -> list[tuple[str, FkEdge]]:
        out = []
        for e in self.edges:
            if e.from_relation == relation:
                out.append((e.to_relation, e))
            elif e.to_relation == relation:
                out.append((e.from_relation, e))
        return sorted(out, key=lambda t: t[0])

    def longest_path_edges(self) -> int:
        """Length (in edges) of the longest simple path; brute force, graphs are tiny."""
        best = 0
        adj: dict[str, list[str]] = {r: [] for r in self.relations}
        for e in self.edges:
            adj[e.from_relation].append(e.to_relation)
            adj[e.to_relation].append(e.from_relation)

        def walk(node: str, seen: set[str], depth: int):
            nonlocal best
            best = max(best, depth)
            for nxt in adj[node]:
                if nxt not in seen:
                    walk(nxt, seen | {nxt}, depth + 1)

        for r in self.relations:
            walk(r, {r}, 0)
        return best


def declare_fk_graph(schemas: list[Schema]) -> FkGraph:
    """Validate declared foreign keys and return the PK-FK edge graph."""
    by_name = {s.relation: s for s in schemas}
    edges: list[FkEdge] = []
    for schema in schemas:
        for fk in schema.foreign_keys:
            if not schema.has_attribute(fk.attribute):
                raise DataError(f"{schema.relation}: FK attribute {fk.attribute!r} "
                                f"does not exist")
            target = by_name.get(fk.ref_relation)
            if target is None:
                raise DataError(f"{schema.relation}.{fk.attribute}: dangling FK "
                                f"reference to unknown relation {fk.ref_relation!r}")
            if not target.has_attribute(fk.ref_attribute):
                raise DataError(f"{schema.relation}.{fk.attribute}: referenced "
                                f"attribute {fk.ref_relation}.{fk.ref_attribute} "
                                f"does not exist")
            local = schema.attribute_type(fk.attribute)
            remote = target.attribute_type(fk.ref_attribute)
            if local.kind != remote.kind:
                raise DataError(
                    f"FK {schema.relation}.{fk.attribute} -> "
                    f"{fk.ref_relation}.{fk.ref_attribute}: incompatible types "
                    f"({local.kind} vs {remote.kind})")
            edges.append(FkEdge(schema.relation, fk.attribute,
                                fk.ref_relation, fk.ref_attribute))
    return FkGraph(edges, sorted(by_name))


class Catalog:
    """All loaded tables plus the FK graph; shared read-only by the engine."""

    def __init__(self, tables: dict[str, Table], fk_graph: FkGraph):
        self.tables = tables
        self.fk_graph = fk_graph

    def table(self, name: str) -> Table:
        if name not in self.tables:
            raise DataError(f"unknown relation: {name!r}")
        return self.tables[name]

    @property
    def relations(self) -> list[str]:
        return sorted(self.tables)
