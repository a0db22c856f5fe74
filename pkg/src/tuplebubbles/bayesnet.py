"""Tree-shaped Bayesian networks over bubble attributes.

Structure learning picks the maximum spanning tree under pairwise empirical
mutual information; the root is the attribute with maximal entropy (ties by
name) so repeated builds are reproducible.  Conditional probability tables
are compressed: the most frequent values of an attribute keep exact
probabilities, the tail is grouped into buckets of near-equal distinct-value
counts, and both the child and the parent side of a CPT use the same
per-attribute compression.

Probabilities are kept as integer co-occurrence counts plus derived float
matrices; unseen parent/child combinations stay at exactly zero (no
smoothing), which is what makes the networks exact when every value is kept
as a most-common value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .catalog import Column, Table
from .errors import ConfigError
from .regions import CodeRegion


@dataclass(frozen=True)
class ModelParams:
    k_mcv: int = 60       # exact most-common values per attribute
    buckets: int = 100    # tail buckets per attribute
    samples: int = 1000   # default draw count for sampling-based inference

    def __post_init__(self):
        if self.k_mcv < 0:
            raise ConfigError(f"k_mcv must be >= 0, got {self.k_mcv}")
        if self.buckets < 1:
            raise ConfigError(f"buckets must be >= 1, got {self.buckets}")
        if self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")


@dataclass(frozen=True)
class Bucket:
    id: int
    lo: int         # minimal code in the bucket
    hi: int         # maximal code in the bucket
    distinct: int   # number of distinct codes actually present

    @property
    def span(self) -> int:
        return self.hi - self.lo + 1


class AttrClasses:
    """Compressed domain of one attribute: MCV singletons plus tail buckets.

    Class indices are laid out as all MCV codes in ascending code order,
    followed by the buckets in ascending range order.  MCV selection ranks by
    (frequency desc, code asc) over the whole column, so representation is
    deterministic.
    """

    def __init__(self, attr: str, mcv_codes: np.ndarray, buckets: list[Bucket]):
        self.attr = attr
        self.mcv_codes = mcv_codes            # sorted ascending
        self.buckets = buckets
        self.n_mcv = len(mcv_codes)
        self.n_classes = self.n_mcv + len(buckets)
        self._bucket_lo = np.array([b.lo for b in buckets], dtype=np.int64)
        self._bucket_hi = np.array([b.hi for b in buckets], dtype=np.int64)

    @property
    def exact(self) -> bool:
        return not self.buckets

    def class_of_codes(self, codes: np.ndarray) -> np.ndarray:
        """Map raw codes to class indices (codes must be observed ones)."""
        out = np.empty(len(codes), dtype=np.int64)
        pos = np.searchsorted(self.mcv_codes, codes)
        pos_clipped = np.minimum(pos, max(self.n_mcv - 1, 0))
        is_mcv = (self.n_mcv > 0) & (self.mcv_codes[pos_clipped] == codes) \
            if self.n_mcv else np.zeros(len(codes), dtype=bool)
        out[is_mcv] = pos[is_mcv]
        rest = ~is_mcv
        if rest.any():
            b = np.searchsorted(self._bucket_hi, codes[rest])
            out[rest] = self.n_mcv + b
        return out

    def weight_vector(self, region: CodeRegion) -> np.ndarray:
        """Per-class fraction of the class mass that falls inside a region.

        MCV classes contribute 0/1.  A bucket contributes the share of its
        code span covered by the region, which under the uniform intra-bucket
        assumption applies to both its distinct count and its mass.
        """
        w = np.zeros(self.n_classes)
        for i, code in enumerate(self.mcv_codes):
            if region.contains(int(code)):
                w[i] = 1.0
        for j, bucket in enumerate(self.buckets):
            inside = region.count_between(bucket.lo, bucket.hi)
            if inside:
                w[self.n_mcv + j] = inside / bucket.span
        return w

    def class_values(self):
        """Per class: (kind, payload) where payload is a code or a Bucket."""
        for code in self.mcv_codes:
            yield ("mcv", int(code))
        for bucket in self.buckets:
            yield ("bucket", bucket)


def compress_domain(column: Column, params: ModelParams,
                    counts: np.ndarray | None = None) -> AttrClasses:
    """Split an observed domain into MCV singletons and near-equal tail buckets."""
    if counts is None:
        counts = np.bincount(column.codes, minlength=column.card)
    observed = np.nonzero(counts)[0]
    if len(observed) == 0:
        return AttrClasses(column.name, np.array([], dtype=np.int64), [])
    order = np.lexsort((observed, -counts[observed]))
    ranked = observed[order]
    mcv = np.sort(ranked[:params.k_mcv])
    tail = np.sort(ranked[params.k_mcv:])
    buckets: list[Bucket] = []
    if len(tail):
        n_buckets = min(params.buckets, len(tail))
        for i, chunk in enumerate(np.array_split(tail, n_buckets)):
            buckets.append(Bucket(id=i, lo=int(chunk[0]), hi=int(chunk[-1]),
                                  distinct=len(chunk)))
    return AttrClasses(column.name, mcv.astype(np.int64), buckets)


@dataclass
class CompressedCPT:
    """P(child | parent) over compressed class domains; root CPTs have no parent.

    ``counts[p, c]`` is the number of rows with parent class p and child class
    c (root CPTs use a single parent row).  ``probs`` divides each row by its
    total; every conditioning class observed in the data sums to one.
    """

    child: str
    parent: str | None
    child_classes: AttrClasses
    parent_classes: AttrClasses | None
    counts: np.ndarray
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        totals = self.counts.sum(axis=1, keepdims=True)
        safe = np.maximum(totals, 1)
        self.probs = self.counts / safe

    @property
    def n_entries(self) -> int:
        return int(np.count_nonzero(self.counts))


def fit_cpt(child: Column, parent: Column | None, params: ModelParams,
            child_classes: AttrClasses | None = None,
            parent_classes: AttrClasses | None = None) -> CompressedCPT:
    """Count-based CPT fit; callers may pass precomputed domain compressions."""
    if child_classes is None:
        child_classes = compress_domain(child, params)
    ccls = child_classes.class_of_codes(child.codes)
    if parent is None:
        counts = np.zeros((1, child_classes.n_classes), dtype=np.int64)
        np.add.at(counts[0], ccls, 1)
        return CompressedCPT(child.name, None, child_classes, None, counts)
    if parent_classes is None:
        parent_classes = compress_domain(parent, params)
    pcls = parent_classes.class_of_codes(parent.codes)
    counts = np.zeros((parent_classes.n_classes, child_classes.n_classes),
                      dtype=np.int64)
    np.add.at(counts, (pcls, ccls), 1)
    return CompressedCPT(child.name, parent.name, child_classes,
                         parent_classes, counts)


def entropy(codes: np.ndarray) -> float:
    """Empirical Shannon entropy in nats."""
    if len(codes) == 0:
        return 0.0
    _, counts = np.unique(codes, return_counts=True)
    p = counts / len(codes)
    return float(-(p * np.log(p)).sum())


def mutual_information(col_i: np.ndarray, col_j: np.ndarray) -> float:
    """Empirical mutual information (nats) between two encoded columns.

    Zero-probability joint cells contribute nothing; the result is clamped at
    zero to absorb float round-off on independent columns.
    """
    if len(col_i) != len(col_j) or len(col_i) == 0:
        raise ValueError("columns must have equal, nonzero length")
    n = len(col_i)
    width = int(col_j.max()) + 1
    joint, joint_counts = np.unique(col_i.astype(np.int64) * width + col_j,
                                    return_counts=True)
    pxy = joint_counts / n
    xvals, xcounts = np.unique(col_i, return_counts=True)
    yvals, ycounts = np.unique(col_j, return_counts=True)
    px = xcounts[np.searchsorted(xvals, joint // width)] / n
    py = ycounts[np.searchsorted(yvals, joint % width)] / n
    mi = float(np.sum(pxy * np.log(pxy / (px * py))))
    return max(mi, 0.0)


@dataclass
class TreeStructure:
    root: str
    parents: dict[str, str | None]
    order: list[str]    # root first; children visited in name order

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, c) for c, p in self.parents.items() if p is not None]


def chow_liu_structure(table: Table) -> TreeStructure:
    """Maximum spanning tree under pairwise MI, rooted at the max-entropy node.

    Edge ties break toward the lexicographically smaller (name, name) pair,
    entropy ties toward the smaller name, so the learned structure is a pure
    function of the data.
    """
    attrs = sorted(table.columns)
    if not attrs:
        raise ValueError("table has no attributes")
    if len(attrs) == 1:
        return TreeStructure(attrs[0], {attrs[0]: None}, attrs)

    scored = []
    for i, u in enumerate(attrs):
        for v in attrs[i + 1:]:
            mi = mutual_information(table.column(u).codes, table.column(v).codes)
            scored.append((-mi, u, v))
    scored.sort()

    parent_of = {a: a for a in attrs}

    def find(a: str) -> str:
        while parent_of[a] != a:
            parent_of[a] = parent_of[parent_of[a]]
            a = parent_of[a]
        return a

    chosen: list[tuple[str, str]] = []
    for _, u, v in scored:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent_of[ru] = rv
            chosen.append((u, v))
        if len(chosen) == len(attrs) - 1:
            break

    root = min(attrs, key=lambda a: (-entropy(table.column(a).codes), a))
    # orient away from the root
    adjacency: dict[str, list[str]] = {a: [] for a in attrs}
    for u, v in chosen:
        adjacency[u].append(v)
        adjacency[v].append(u)
    parents: dict[str, str | None] = {root: None}
    order = [root]
    stack = [root]
    while stack:
        node = stack.pop(0)
        for nxt in sorted(adjacency[node]):
            if nxt not in parents:
                parents[nxt] = node
                order.append(nxt)
                stack.append(nxt)
    return TreeStructure(root, parents, order)


class ChowLiuNetwork:
    """One learned network: tree structure plus one compressed CPT per node."""

    def __init__(self, bubble_id: str, n_rows: int, structure: TreeStructure | None,
                 cpts: dict[str, CompressedCPT], params: ModelParams):
        self.bubble_id = bubble_id
        self.n_rows = n_rows
        self.structure = structure
        self.cpts = cpts
        self.params = params
        self._marginals: dict[str, np.ndarray] | None = None

    @property
    def degenerate(self) -> bool:
        return self.structure is None

    @property
    def root(self) -> str:
        assert self.structure is not None
        return self.structure.root

    @property
    def order(self) -> list[str]:
        assert self.structure is not None
        return self.structure.order

    @property
    def nodes(self) -> list[str]:
        return sorted(self.cpts)

    def parent(self, node: str) -> str | None:
        assert self.structure is not None
        return self.structure.parents[node]

    def children(self, node: str) -> list[str]:
        assert self.structure is not None
        return sorted(c for c, p in self.structure.parents.items() if p == node)

    def classes(self, node: str) -> AttrClasses:
        return self.cpts[node].child_classes

    def has_node(self, node: str) -> bool:
        return node in self.cpts

    def marginal(self, node: str) -> np.ndarray:
        """Unconditional class marginal, derived once root-down."""
        if self._marginals is None:
            margs: dict[str, np.ndarray] = {}
            for name in self.order:
                cpt = self.cpts[name]
                if cpt.parent is None:
                    margs[name] = cpt.probs[0].copy()
                else:
                    margs[name] = margs[cpt.parent] @ cpt.probs
            self._marginals = margs
        return self._marginals[node]

    def storage_entries(self, node: str) -> int:
        return self.cpts[node].n_entries


def learn_network(bubble, params: ModelParams) -> ChowLiuNetwork:
    """Learn structure and CPTs for one bubble; empty bubbles come out degenerate."""
    table: Table | None = getattr(bubble, "table", None) if not isinstance(bubble, Table) else bubble
    bubble_id = getattr(bubble, "id", "table")
    if table is None:
        raise ValueError("bubble has no materialized rows to learn from")
    if table.n_rows == 0:
        return ChowLiuNetwork(bubble_id, 0, None, {}, params)
    structure = chow_liu_structure(table)
    return fit_network(bubble_id, table, structure, params)


def fit_network(bubble_id: str, table: Table, structure: TreeStructure,
                params: ModelParams) -> ChowLiuNetwork:
    """Fit CPTs for a given tree; exposed so callers can pin a structure."""
    classes = {name: compress_domain(col, params)
               for name, col in table.columns.items()}
    cpts: dict[str, CompressedCPT] = {}
    for node in structure.order:
        parent = structure.parents[node]
        cpts[node] = fit_cpt(
            table.column(node),
            table.column(parent) if parent is not None else None,
            params,
            child_classes=classes[node],
            parent_classes=classes[parent] if parent is not None else None,
        )
    return ChowLiuNetwork(bubble_id, table.n_rows, structure, cpts, params)
