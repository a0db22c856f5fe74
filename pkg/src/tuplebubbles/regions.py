"""Predicate and evidence regions.

A bound predicate keeps its operator and literal in value space and is only
resolved to dictionary codes against a concrete column.  That makes the same
predicate applicable to any column holding the attribute, even when two
tables (or a pre-joined table) encode the value domain with different
dictionaries.  Resolved regions are unions of inclusive code intervals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Column
from .errors import BindError

COMPARISONS = ("=", "<", "<=", ">", ">=", "between")


class CodeRegion:
    """Sorted, disjoint, inclusive code intervals over one column's codes."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = lo
        self.hi = hi

    @staticmethod
    def empty() -> "CodeRegion":
        z = np.array([], dtype=np.int64)
        return CodeRegion(z, z)

    @staticmethod
    def from_intervals(pairs: list[tuple[int, int]]) -> "CodeRegion":
        pairs = sorted((lo, hi) for lo, hi in pairs if lo <= hi)
        merged: list[tuple[int, int]] = []
        for lo, hi in pairs:
            if merged and lo <= merged[-1][1] + 1:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        if not merged:
            return CodeRegion.empty()
        lo_a = np.array([p[0] for p in merged], dtype=np.int64)
        hi_a = np.array([p[1] for p in merged], dtype=np.int64)
        return CodeRegion(lo_a, hi_a)

    @staticmethod
    def full(column: Column) -> "CodeRegion":
        if column.n_values == 0:
            return CodeRegion.empty()
        return CodeRegion.from_intervals([(0, column.n_values - 1)])

    @property
    def is_empty(self) -> bool:
        return len(self.lo) == 0

    def size(self) -> int:
        return int(np.sum(self.hi - self.lo + 1))

    def count_between(self, lo: int, hi: int) -> int:
        """Number of region codes inside the inclusive interval [lo, hi]."""
        if self.is_empty or hi < lo:
            return 0
        a = np.maximum(self.lo, lo)
        b = np.minimum(self.hi, hi)
        return int(np.sum(np.maximum(b - a + 1, 0)))

    def contains(self, code: int) -> bool:
        return self.count_between(code, code) == 1

    def mask(self, codes: np.ndarray) -> np.ndarray:
        """Boolean row mask; the NULL sentinel lies above every interval."""
        out = np.zeros(len(codes), dtype=bool)
        for lo, hi in zip(self.lo, self.hi):
            out |= (codes >= lo) & (codes <= hi)
        return out

    def intersect(self, other: "CodeRegion") -> "CodeRegion":
        pairs = []
        for lo1, hi1 in zip(self.lo, self.hi):
            for lo2, hi2 in zip(other.lo, other.hi):
                lo, hi = max(lo1, lo2), min(hi1, hi2)
                if lo <= hi:
                    pairs.append((int(lo), int(hi)))
        return CodeRegion.from_intervals(pairs)

    def __repr__(self) -> str:
        spans = ", ".join(f"[{lo},{hi}]" for lo, hi in zip(self.lo, self.hi))
        return f"CodeRegion({spans})"


@dataclass(frozen=True)
class Predicate:
    """One bound comparison on relation.attribute in value space."""

    relation: str
    attribute: str
    op: str
    value: object            # literal; for BETWEEN a (lo, hi) tuple

    def code_region(self, column: Column) -> CodeRegion:
        n = column.n_values
        if n == 0:
            return CodeRegion.empty()
        if self.op == "=":
            code = column.encode_eq(self.value)
            if code is None:
                return CodeRegion.empty()
            return CodeRegion.from_intervals([(code, code)])
        if self.op == "<":
            return CodeRegion.from_intervals([(0, column.search_left(self.value) - 1)])
        if self.op == "<=":
            return CodeRegion.from_intervals([(0, column.search_right(self.value) - 1)])
        if self.op == ">":
            return CodeRegion.from_intervals([(column.search_right(self.value), n - 1)])
        if self.op == ">=":
            return CodeRegion.from_intervals([(column.search_left(self.value), n - 1)])
        if self.op == "between":
            lo, hi = self.value
            return CodeRegion.from_intervals(
                [(column.search_left(lo), column.search_right(hi) - 1)])
        raise BindError(f"unsupported operator {self.op!r}")


@dataclass(frozen=True)
class ValueRegion:
    """Evidence region in value space: a union of points and closed spans.

    Produced when one network's support for a shared attribute is handed to
    the next network in a join chain; points come from exactly stored values,
    spans from bucketed ranges.
    """

    points: tuple = ()
    spans: tuple = ()

    @property
    def is_empty(self) -> bool:
        return not self.points and not self.spans

    def code_region(self, column: Column) -> CodeRegion:
        pairs: list[tuple[int, int]] = []
        for v in self.points:
            code = column.encode_eq(v)
            if code is not None:
                pairs.append((code, code))
        for lo, hi in self.spans:
            a = column.search_left(lo)
            b = column.search_right(hi) - 1
            if a <= b:
                pairs.append((a, b))
        return CodeRegion.from_intervals(pairs)


def intersect_regions(regions: list[CodeRegion]) -> CodeRegion:
    if not regions:
        raise ValueError("need at least one region")
    out = regions[0]
    for region in regions[1:]:
        out = out.intersect(region)
    return out
