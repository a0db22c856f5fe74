"""Tuple-bubble creation and the compact per-bubble attribute index.

Relations are split into contiguous, near-equal horizontal partitions; with
join mode enabled, every pair of partitions along a declared FK edge is
additionally materialized as one pre-joined bubble.  Each bubble gets a small
index (exact min/max, distinct count, and a no-false-negative membership
filter per attribute) used to steer substitute-query selection.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, Column, FkGraph, Schema, Table
from .errors import ConfigError

# Membership filters above this many distinct codes degenerate to an
# always-true filter: still no false negatives, just no pruning power.
FILTER_DISTINCT_CAP = 4096
FILTER_BITS_PER_ELEMENT = 9.6   # ~1% false positives
FILTER_HASHES = 7


@dataclass(frozen=True)
class PartitionConfig:
    theta: int = 500_000
    k: int = 3
    join_mode: bool = False

    def __post_init__(self):
        if self.theta < 1:
            raise ConfigError(f"theta must be >= 1, got {self.theta}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")


def partition_count(n_rows: int, cfg: PartitionConfig) -> int:
    """How many partitions an n-row relation gets: min(k, ceil(N / theta))."""
    if n_rows <= cfg.theta:
        return 1
    return min(cfg.k, -(-n_rows // cfg.theta))


def partition_ranges(n_rows: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous row ranges with sizes differing by at most one."""
    base, extra = divmod(n_rows, parts)
    ranges = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


class BloomFilter:
    """Plain Bloom filter over integer codes; never reports a false negative.

    Hashing is blake2b-based so the bit array is identical across runs and
    platforms.  ``m_bits == 0`` marks the degenerate always-true filter used
    for very high-cardinality attributes.
    """

    def __init__(self, m_bits: int, n_hashes: int, bits: np.ndarray):
        self.m_bits = m_bits
        self.n_hashes = n_hashes
        self.bits = bits

    @staticmethod
    def build(codes: np.ndarray, distinct: int) -> "BloomFilter":
        if distinct > FILTER_DISTINCT_CAP:
            return BloomFilter(0, 0, np.zeros(0, dtype=np.uint8))
        m = max(8, int(np.ceil(max(distinct, 1) * FILTER_BITS_PER_ELEMENT)))
        bits = np.zeros((m + 7) // 8, dtype=np.uint8)
        bf = BloomFilter(m, FILTER_HASHES, bits)
        for code in np.unique(codes):
            for pos in bf._positions(int(code)):
                bits[pos >> 3] |= 1 << (pos & 7)
        return bf

    def _positions(self, code: int):
        digest = hashlib.blake2b(code.to_bytes(8, "little", signed=True),
                                 digest_size=16).digest()
        h1 = int.from_bytes(digest[:8], "little")
        h2 = int.from_bytes(digest[8:], "little") | 1
        for i in range(self.n_hashes):
            yield (h1 + i * h2) % self.m_bits

    def might_contain(self, code: int) -> bool:
        if self.m_bits == 0:
            return True
        return all(self.bits[p >> 3] & (1 << (p & 7)) for p in self._positions(code))


@dataclass
class AttrIndexEntry:
    min_code: int
    max_code: int
    distinct: int
    filter: BloomFilter


class BubbleIndex:
    """Per-attribute zone map plus membership filter for one bubble."""

    def __init__(self, entries: dict[str, AttrIndexEntry]):
        self.entries = entries

    def probe_equality(self, column_name: str, code: int) -> bool:
        entry = self.entries.get(column_name)
        if entry is None or entry.distinct == 0:
            return False
        if code < entry.min_code or code > entry.max_code:
            return False
        return entry.filter.might_contain(code)

    def probe_range(self, column_name: str, lo: int, hi: int) -> bool:
        entry = self.entries.get(column_name)
        if entry is None or entry.distinct == 0:
            return False
        return not (hi < entry.min_code or lo > entry.max_code)

    def distinct(self, column_name: str) -> int:
        entry = self.entries.get(column_name)
        return entry.distinct if entry else 0


@dataclass
class TupleBubble:
    """A horizontal partition of one relation, or one pre-joined partition pair.

    ``relations`` lists the covered relation(s); ``table`` holds the rows while
    the model is being built and may be dropped afterwards (estimation only
    needs the learned network, the index, ``attr_map`` and ``n_rows``).
    """

    id: str
    relations: tuple[str, ...]
    n_rows: int
    table: Table | None
    source: dict = field(default_factory=dict)
    attr_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.attr_map and self.table is not None:
            self.attr_map = dict(self.table.attr_map)

    @property
    def is_join(self) -> bool:
        return len(self.relations) > 1

    @property
    def empty(self) -> bool:
        return self.n_rows == 0


def create_bubbles(catalog: Catalog, cfg: PartitionConfig) -> list[TupleBubble]:
    """Per-relation bubbles: contiguous near-equal row ranges, 1..k per relation."""
    bubbles: list[TupleBubble] = []
    for name in catalog.relations:
        table = catalog.table(name)
        parts = partition_count(table.n_rows, cfg)
        for ordinal, (lo, hi) in enumerate(partition_ranges(table.n_rows, parts)):
            bubbles.append(TupleBubble(
                id=f"{name}/p{ordinal}",
                relations=(name,),
                n_rows=hi - lo,
                table=table.sliced(lo, hi),
                source={"kind": "relation", "relation": name,
                        "ordinal": ordinal, "row_lo": lo, "row_hi": hi},
            ))
    return bubbles


def _joined_schema(left: Table, right: Table, left_attr: str, right_attr: str) -> tuple[Schema, dict, dict]:
    """Union schema for a pre-joined pair; the join attribute is kept once.

    All columns get qualified ``relation.attribute`` names so the two sides
    can never collide; the right side's join attribute maps onto the left's
    column (their values are equal on every joined row).
    """
    lname, rname = left.name, right.name
    attributes = []
    col_sources: dict[str, tuple[str, str]] = {}
    attr_map: dict[tuple[str, str], str] = {}
    for attr, atype in left.schema.attributes:
        qual = f"{lname}.{attr}"
        attributes.append((qual, atype))
        col_sources[qual] = (lname, attr)
        attr_map[(lname, attr)] = qual
    for attr, atype in right.schema.attributes:
        if attr == right_attr:
            attr_map[(rname, attr)] = f"{lname}.{left_attr}"
            continue
        qual = f"{rname}.{attr}"
        attributes.append((qual, atype))
        col_sources[qual] = (rname, attr)
        attr_map[(rname, attr)] = qual
    schema = Schema(relation=f"{lname}+{rname}", attributes=attributes)
    return schema, col_sources, attr_map


def materialize_join(left: Table, right: Table,
                     left_attr: str, right_attr: str) -> Table:
    """Equi-join two (partition) tables on one attribute pair.

    Codes differ between the two dictionaries, so matching goes through the
    decoded values; NULL keys never match.
    """
    schema, col_sources, attr_map = _joined_schema(left, right, left_attr, right_attr)
    lcol = left.column(left_attr)
    rcol = right.column(right_attr)

    # right value -> row indices (lists handle duplicate keys)
    rows_by_value: dict = {}
    rcodes = rcol.codes
    for idx in range(right.n_rows):
        code = rcodes[idx]
        if rcol.has_null and code == rcol.n_values:
            continue
        rows_by_value.setdefault(rcol.decoded[code], []).append(idx)

    # per left code: matching right rows, resolved once over the dictionary
    ldec = lcol.decoded
    matches_by_code = [rows_by_value.get(ldec[c], ()) for c in range(lcol.n_values)]
    lcodes = lcol.codes
    if lcol.has_null:
        valid = lcodes != lcol.n_values
    else:
        valid = np.ones(left.n_rows, dtype=bool)

    if all(len(m) <= 1 for m in matches_by_code):
        # unique join keys on the right (the FK case): fully vectorized
        right_for_code = np.array(
            [m[0] if m else -1 for m in matches_by_code] + [-1], dtype=np.int64)
        probed = right_for_code[np.minimum(lcodes, lcol.n_values)]
        probed[~valid] = -1
        lrows = np.nonzero(probed >= 0)[0].astype(np.int64)
        rrows = probed[lrows]
    else:
        left_rows: list[int] = []
        right_rows: list[int] = []
        for idx in np.nonzero(valid)[0]:
            for ridx in matches_by_code[lcodes[idx]]:
                left_rows.append(int(idx))
                right_rows.append(ridx)
        lrows = np.array(left_rows, dtype=np.int64)
        rrows = np.array(right_rows, dtype=np.int64)
    columns = {}
    for qual, _ in schema.attributes:
        rel, attr = col_sources[qual]
        if rel == left.name:
            columns[qual] = left.column(attr).taken(lrows, name=qual)
        else:
            columns[qual] = right.column(attr).taken(rrows, name=qual)
    return Table(schema, columns, len(lrows), attr_map)


def create_join_bubbles(catalog: Catalog, fk_graph: FkGraph,
                        cfg: PartitionConfig) -> list[TupleBubble]:
    """One bubble per (left partition, right partition) pair of every FK edge."""
    bubbles: list[TupleBubble] = []
    for edge in fk_graph.edges:
        left = catalog.table(edge.from_relation)
        right = catalog.table(edge.to_relation)
        left_parts = partition_ranges(left.n_rows, partition_count(left.n_rows, cfg))
        right_parts = partition_ranges(right.n_rows, partition_count(right.n_rows, cfg))
        for i, (llo, lhi) in enumerate(left_parts):
            for j, (rlo, rhi) in enumerate(right_parts):
                joined = materialize_join(left.sliced(llo, lhi),
                                          right.sliced(rlo, rhi),
                                          edge.from_attribute, edge.to_attribute)
                bubbles.append(TupleBubble(
                    id=f"{edge.from_relation}/p{i}+{edge.to_relation}/p{j}",
                    relations=(edge.from_relation, edge.to_relation),
                    n_rows=joined.n_rows,
                    table=joined,
                    source={"kind": "join",
                            "left": edge.from_relation, "left_ordinal": i,
                            "right": edge.to_relation, "right_ordinal": j,
                            "left_attribute": edge.from_attribute,
                            "right_attribute": edge.to_attribute},
                ))
    return bubbles


def build_bubble_index(bubble: TupleBubble) -> BubbleIndex:
    """Exact zone map and membership filter per attribute; empty bubbles index empty."""
    entries: dict[str, AttrIndexEntry] = {}
    if bubble.table is None:
        raise ValueError(f"bubble {bubble.id} has no materialized rows to index")
    for name, column in bubble.table.columns.items():
        codes = column.codes
        if column.has_null:
            codes = codes[codes != column.n_values]
        if len(codes) == 0:
            entries[name] = AttrIndexEntry(0, -1, 0,
                                           BloomFilter(0, 0, np.zeros(0, np.uint8)))
            continue
        distinct_codes = np.unique(codes)
        entries[name] = AttrIndexEntry(
            min_code=int(distinct_codes[0]),
            max_code=int(distinct_codes[-1]),
            distinct=len(distinct_codes),
            filter=BloomFilter.build(distinct_codes, len(distinct_codes)),
        )
    return BubbleIndex(entries)
