"""Aggregate estimation over bubble models.

A query is answered by substitute queries: every relation (or pre-joined
relation pair) is replaced by one concrete bubble, the bubbles' networks are
ordered into a chain whose consecutive members share an attribute, evidence
flows down the chain, and the final network's restricted probabilities are
turned into the aggregate.  Per-substitute estimates are then combined:
plain sums for COUNT/SUM, result-count weighting for AVG, min/max over the
substitutes for MIN/MAX.

Two join treatments exist.  The default propagates the surviving support of
each shared attribute as evidence into the next network.  The independence
mode skips propagation and multiplies the networks' local selectivities,
which under correlated joins can be badly off; it is kept as the baseline
the propagating mode is measured against.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .bayesnet import ChowLiuNetwork
from .catalog import Catalog, Column
from .errors import ConfigError, UnanswerableQueryError
from .inference import per_value_distribution, selectivity, progressive_sampling, Distribution
from .partition import BubbleIndex, TupleBubble
from .regions import CodeRegion, ValueRegion, intersect_regions
from .sql import BoundQuery

SIGMA_ALL = "all"


@dataclass
class Estimate:
    """One scalar answer; ``count`` is the substitute's own result-count estimate."""

    value: float | None
    relevant: bool
    count: float = 0.0


@dataclass
class BubbleModel:
    """Built model: bubbles plus their networks and indexes, over one catalog."""

    catalog: Catalog
    bubbles: list[TupleBubble]
    networks: dict[str, ChowLiuNetwork]
    indexes: dict[str, BubbleIndex]

    def bubble(self, bubble_id: str) -> TupleBubble:
        for b in self.bubbles:
            if b.id == bubble_id:
                return b
        raise KeyError(bubble_id)


@dataclass
class ChainLink:
    """Evidence hand-off between consecutive chain units."""

    from_column: str    # column name inside the upstream unit
    to_column: str      # column name inside the downstream unit


@dataclass
class ChainUnit:
    bubble: TupleBubble
    network: ChowLiuNetwork
    index: BubbleIndex


@dataclass
class SubstituteQuery:
    """One bubble per slot, with the resolved chain order."""

    units: list[ChainUnit]
    links: list[ChainLink]

    @property
    def bubble_ids(self) -> list[str]:
        return [u.bubble.id for u in self.units]


@dataclass
class SubstituteReport:
    bubbles: list[str]
    chain: list[str]
    estimate: Estimate


@dataclass
class QueryReport:
    sql: str
    agg_func: str
    method: str
    sigma: object
    propagate: bool
    value: float | None
    relevant: bool
    substitutes: list[SubstituteReport] = field(default_factory=list)
    latency_ms: float = 0.0


def column_for(catalog: Catalog, bubble: TupleBubble, column_name: str) -> Column:
    """Dictionary-bearing column behind a bubble column name.

    Qualified names ("rel.attr") come from pre-joined bubbles and resolve into
    the source relation; bare names belong to the bubble's single relation.
    """
    if "." in column_name:
        rel, attr = column_name.split(".", 1)
    else:
        rel, attr = bubble.relations[0], column_name
    return catalog.table(rel).column(attr)


def estimate_count(p: float, n_rows: float) -> float:
    """COUNT estimate from a chain selectivity and the joined cardinality."""
    if not 0.0 <= p <= 1.0 + 1e-12:
        raise ValueError(f"selectivity out of range: {p}")
    if n_rows < 0:
        raise ValueError(f"negative cardinality: {n_rows}")
    return p * n_rows


APPEARANCE_THRESHOLD = 0.5   # expected cardinality that counts as "appears"


def estimate_aggregate(dist: Distribution, agg: str, n_rows: float,
                       column: Column) -> Estimate:
    """Turn a per-value distribution into one aggregate estimate.

    Per-class cardinality is mass * n_rows; classes at or above the appearance
    threshold qualify for MIN/MAX/SUM.  Buckets contribute their range minimum,
    maximum, or midpoint value.
    """
    if agg in ("SUM", "AVG") and not column.attr_type.numeric:
        raise ValueError(f"{agg} over categorical attribute {column.name!r}")
    total = float(dist.masses.sum()) * n_rows
    if agg == "COUNT":
        return Estimate(total, relevant=total >= APPEARANCE_THRESHOLD, count=total)

    qualifying = []   # (low value, high value, representative, cardinality)
    for kind, payload, mass in dist.support():
        c = mass * n_rows
        if c < APPEARANCE_THRESHOLD:
            continue
        if kind == "mcv":
            v = column.decode_code(payload)
            if v is None:
                continue
            qualifying.append((v, v, v, c))
        else:
            lo = column.decode_code(payload.lo)
            hi = column.decode_code(payload.hi)
            qualifying.append((lo, hi, (lo + hi) / 2.0, c))

    relevant = total >= APPEARANCE_THRESHOLD
    if agg == "MIN":
        value = min((q[0] for q in qualifying), default=None)
        return Estimate(value, relevant=relevant and value is not None, count=total)
    if agg == "MAX":
        value = max((q[1] for q in qualifying), default=None)
        return Estimate(value, relevant=relevant and value is not None, count=total)
    sum_value = float(sum(rep * c for _, _, rep, c in qualifying))
    if agg == "SUM":
        return Estimate(sum_value, relevant=relevant, count=total)
    if agg == "AVG":
        if total <= 0.0:
            return Estimate(None, relevant=False, count=0.0)
        return Estimate(sum_value / total, relevant=relevant, count=total)
    raise ValueError(f"unknown aggregate {agg!r}")


def _normalize_pair(cond) -> tuple:
    a = (cond.rel_a, cond.attr_a)
    b = (cond.rel_b, cond.attr_b)
    return (a, b) if a <= b else (b, a)


def _join_bubble_matches(bubble: TupleBubble, cond) -> bool:
    src = bubble.source
    if src.get("kind") != "join":
        return False
    pair = ((src["left"], src["left_attribute"]), (src["right"], src["right_attribute"]))
    pair = pair if pair[0] <= pair[1] else (pair[1], pair[0])
    return pair == _normalize_pair(cond)


def query_slots(query: BoundQuery, bubbles: list[TupleBubble]) -> list[list[TupleBubble]]:
    """Group candidate bubbles into slots: one per join edge with pre-joined
    bubbles, one per relation left uncovered.  Pre-joined coverage is
    preferred because it captures the cross-relation dependencies."""
    slots: list[list[TupleBubble]] = []
    covered: set[str] = set()
    for cond in sorted(query.joins, key=_normalize_pair):
        candidates = sorted((b for b in bubbles if _join_bubble_matches(b, cond)),
                            key=lambda b: b.id)
        if candidates:
            slots.append(candidates)
            covered.update((cond.rel_a, cond.rel_b))
    for relation in query.relations:
        if relation in covered:
            continue
        candidates = sorted((b for b in bubbles
                             if not b.is_join and b.relations == (relation,)),
                            key=lambda b: b.id)
        if not candidates:
            raise UnanswerableQueryError(
                f"no bubbles available for relation {relation!r}")
        slots.append(candidates)
    return slots


def _local_regions(query: BoundQuery, unit_bubble: TupleBubble,
                   catalog: Catalog) -> dict[str, CodeRegion]:
    """Resolve the query predicates applicable to one bubble into code regions."""
    by_column: dict[str, list[CodeRegion]] = {}
    for relation in unit_bubble.relations:
        for pred in query.predicates_for(relation):
            col_name = unit_bubble.attr_map[(relation, pred.attribute)]
            column = column_for(catalog, unit_bubble, col_name)
            by_column.setdefault(col_name, []).append(pred.code_region(column))
    return {col: intersect_regions(regions) for col, regions in by_column.items()}


def _bubble_passes_probes(bubble: TupleBubble, index: BubbleIndex,
                          query: BoundQuery, catalog: Catalog) -> bool:
    for relation in bubble.relations:
        for pred in query.predicates_for(relation):
            col_name = bubble.attr_map[(relation, pred.attribute)]
            column = column_for(catalog, bubble, col_name)
            region = pred.code_region(column)
            if region.is_empty:
                return False
            hit = False
            for lo, hi in zip(region.lo, region.hi):
                if lo == hi:
                    hit = index.probe_equality(col_name, int(lo))
                else:
                    hit = index.probe_range(col_name, int(lo), int(hi))
                if hit:
                    break
            if not hit:
                return False
    return True


def select_bubble_combinations(query: BoundQuery, bubbles: list[TupleBubble],
                               indexes: dict[str, BubbleIndex], sigma,
                               catalog: Catalog) -> list[tuple[TupleBubble, ...]]:
    """Choose which bubble combinations to estimate.

    With sigma="all", the full cross product over the slots.  Otherwise the
    combinations whose bubbles all pass the index probes are preferred,
    ranked by the product of bubble sizes (larger first); if none passes,
    the largest combinations are used anyway.
    """
    slots = query_slots(query, bubbles)
    combos = list(itertools.product(*slots))
    if sigma == SIGMA_ALL:
        return combos
    if not isinstance(sigma, int) or sigma < 1:
        raise ConfigError(f"sigma must be a positive integer or 'all', got {sigma!r}")
    limit = min(len(slot) for slot in slots)
    if sigma > limit:
        raise ConfigError(f"sigma={sigma} exceeds the smallest slot size {limit}")

    passes: dict[str, bool] = {}
    for slot in slots:
        for b in slot:
            if b.id not in passes:
                passes[b.id] = _bubble_passes_probes(b, indexes[b.id], query, catalog)

    def size_key(combo):
        product = 1
        for b in combo:
            product *= max(b.n_rows, 0)
        return (-product, tuple(b.id for b in combo))

    passing = sorted((c for c in combos if all(passes[b.id] for b in c)), key=size_key)
    failing = sorted((c for c in combos if not all(passes[b.id] for b in c)), key=size_key)
    return (passing + failing)[:sigma]


def order_chain(units: list[ChainUnit], query: BoundQuery,
                catalog: Catalog) -> SubstituteQuery:
    """Arrange the units so consecutive ones share an attribute and the unit
    holding the aggregation attribute comes last; deterministic, smallest
    bubble-id order wins ties.  Raises when no such chain exists."""
    units = sorted(units, key=lambda u: u.bubble.id)
    if len(units) == 1:
        return SubstituteQuery(units, [])

    def link_between(up: ChainUnit, down: ChainUnit) -> ChainLink | None:
        for cond in sorted(query.joins, key=_normalize_pair):
            pairs = [((cond.rel_a, cond.attr_a), (cond.rel_b, cond.attr_b)),
                     ((cond.rel_b, cond.attr_b), (cond.rel_a, cond.attr_a))]
            for (rel_u, attr_u), (rel_d, attr_d) in pairs:
                if (rel_u, attr_u) in up.bubble.attr_map \
                        and (rel_d, attr_d) in down.bubble.attr_map \
                        and rel_u in up.bubble.relations \
                        and rel_d in down.bubble.relations:
                    return ChainLink(up.bubble.attr_map[(rel_u, attr_u)],
                                     down.bubble.attr_map[(rel_d, attr_d)])
        # pre-joined bubbles overlapping on a relation: hand over that
        # relation's primary key (or its first attribute) between them
        shared = sorted(set(up.bubble.relations) & set(down.bubble.relations))
        for rel in shared:
            pk = catalog.table(rel).schema.primary_key
            attrs = sorted(attr for (r, attr) in up.bubble.attr_map if r == rel)
            chosen = pk if pk in attrs else (attrs[0] if attrs else None)
            if chosen is None:
                continue
            return ChainLink(up.bubble.attr_map[(rel, chosen)],
                             down.bubble.attr_map[(rel, chosen)])
        return None

    holds_agg = [u for u in units
                 if query.agg_relation is None or u.bubble.covers(query.agg_relation)]
    if not holds_agg:
        raise UnanswerableQueryError(
            f"no selected bubble covers the aggregation relation "
            f"{query.agg_relation!r}")

    for perm in itertools.permutations(units):
        if query.agg_relation is not None and perm[-1] not in holds_agg:
            continue
        links = []
        ok = True
        for up, down in zip(perm, perm[1:]):
            link = link_between(up, down)
            if link is None:
                ok = False
                break
            links.append(link)
        if ok:
            return SubstituteQuery(list(perm), links)
    raise UnanswerableQueryError(
        "no chain order connects the selected bubbles through shared attributes")


def _joined_cardinality(sub: SubstituteQuery) -> float:
    """Cardinality of the chain's implied join under key-uniformity.

    The product of bubble sizes is divided, per link, by the larger distinct
    count of the link attribute on its two sides; for PK-FK joins this equals
    the foreign-key side's size, which is the exact join cardinality.
    """
    n = 1.0
    for unit in sub.units:
        n *= unit.bubble.n_rows
    for link, up, down in zip(sub.links, sub.units, sub.units[1:]):
        card = max(up.index.distinct(link.from_column),
                   down.index.distinct(link.to_column))
        if card == 0:
            return 0.0
        n /= card
    return n


def _mass(network: ChowLiuNetwork, regions: dict[str, CodeRegion],
          method: str, samples: int, rng: np.random.Generator) -> float:
    if method == "ve":
        return selectivity(network, regions)
    if method == "ps":
        return progressive_sampling(network, regions, samples, rng)
    raise ConfigError(f"unknown inference method {method!r}")


def propagate_evidence(sub: SubstituteQuery, query: BoundQuery, catalog: Catalog,
                       method: str, samples: int, rng: np.random.Generator):
    """Walk the chain, turning each network's surviving support of the shared
    attribute into an evidence region on its successor.

    Returns (final unit, final evidence regions) or None when an intermediate
    distribution has zero mass (the substitute then answers 0, non-relevant).
    """
    pending: list[dict[str, CodeRegion]] = [dict() for _ in sub.units]
    for i, unit in enumerate(sub.units[:-1]):
        regions = _local_regions(query, unit.bubble, catalog)
        for col, region in pending[i].items():
            regions[col] = regions[col].intersect(region) if col in regions else region
        link = sub.links[i]
        dist = per_value_distribution(unit.network, link.from_column, regions,
                                      method=method, n_samples=samples, seed=rng)
        if dist.mass <= 0.0:
            return None
        up_column = column_for(catalog, unit.bubble, link.from_column)
        points = []
        spans = []
        for kind, payload, _ in dist.support():
            if kind == "mcv":
                v = up_column.decode_code(payload)
                if v is not None:
                    points.append(v)
            else:
                spans.append((up_column.decode_code(payload.lo),
                              up_column.decode_code(payload.hi)))
        down_unit = sub.units[i + 1]
        down_column = column_for(catalog, down_unit.bubble, link.to_column)
        evidence = ValueRegion(tuple(points), tuple(spans)).code_region(down_column)
        if evidence.is_empty:
            return None
        prev = pending[i + 1].get(link.to_column)
        pending[i + 1][link.to_column] = \
            evidence if prev is None else prev.intersect(evidence)

    final = sub.units[-1]
    regions = _local_regions(query, final.bubble, catalog)
    for col, region in pending[-1].items():
        regions[col] = regions[col].intersect(region) if col in regions else region
    return final, regions


def _estimate_substitute(sub: SubstituteQuery, query: BoundQuery, catalog: Catalog,
                         method: str, samples: int, rng: np.random.Generator,
                         propagate: bool) -> Estimate:
    if any(u.bubble.empty or u.network.degenerate for u in sub.units):
        return Estimate(0.0 if query.agg_func in ("COUNT", "SUM") else None,
                        relevant=False, count=0.0)

    n_joined = _joined_cardinality(sub)
    scale = 1.0
    if propagate:
        handoff = propagate_evidence(sub, query, catalog, method, samples, rng)
        if handoff is None:
            return Estimate(0.0 if query.agg_func in ("COUNT", "SUM") else None,
                            relevant=False, count=0.0)
        final, regions = handoff
    else:
        # independence baseline: no cross-network evidence, local masses multiply
        final = sub.units[-1]
        for unit in sub.units[:-1]:
            local = _local_regions(query, unit.bubble, catalog)
            scale *= _mass(unit.network, local, method, samples, rng)
        regions = _local_regions(query, final.bubble, catalog)

    if query.agg_func == "COUNT" or query.agg_attribute is None:
        m = _mass(final.network, regions, method, samples, rng)
        value = estimate_count(m * scale, n_joined)
        return Estimate(value, relevant=value >= APPEARANCE_THRESHOLD, count=value)

    agg_col_name = final.bubble.attr_map[(query.agg_relation, query.agg_attribute)]
    dist = per_value_distribution(final.network, agg_col_name, regions,
                                  method=method, n_samples=samples, seed=rng)
    if scale != 1.0:
        dist = Distribution(dist.attr, dist.classes, dist.masses * scale)
    column = column_for(catalog, final.bubble, agg_col_name)
    return estimate_aggregate(dist, query.agg_func, n_joined, column)


def combine_estimates(estimates: list[Estimate], agg: str) -> Estimate:
    """Fold substitute estimates into the final answer.

    SUM and COUNT add up with weight one.  AVG weighs each relevant substitute
    by its share of the total estimated result count.  MIN/MAX take the
    extreme over the relevant substitutes.
    """
    if not estimates:
        raise ValueError("no substitute estimates to combine")
    relevant = [e for e in estimates if e.relevant and e.value is not None]
    total_count = sum(e.count for e in estimates)
    if agg in ("COUNT", "SUM"):
        value = sum((e.value or 0.0) for e in estimates)
        return Estimate(value, relevant=bool(relevant), count=total_count)
    if not relevant:
        return Estimate(None, relevant=False, count=0.0)
    if agg == "AVG":
        weight_base = sum(e.count for e in relevant)
        value = sum(e.value * (e.count / weight_base) for e in relevant)
        return Estimate(value, relevant=True, count=total_count)
    if agg == "MIN":
        return Estimate(min(e.value for e in relevant), True, total_count)
    if agg == "MAX":
        return Estimate(max(e.value for e in relevant), True, total_count)
    raise ValueError(f"unknown aggregate {agg!r}")


def estimate_result(query: BoundQuery, model: BubbleModel, sigma=SIGMA_ALL,
                    method: str = "ps", samples: int = 1000, seed: int = 0,
                    propagate: bool = True) -> tuple[Estimate, QueryReport]:
    """End-to-end estimation: match bubbles, pick sigma combinations, chain,
    estimate each substitute, and combine."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    combos = select_bubble_combinations(query, model.bubbles, model.indexes,
                                        sigma, model.catalog)
    report = QueryReport(sql=query.sql, agg_func=query.agg_func, method=method,
                         sigma=sigma, propagate=propagate, value=None,
                         relevant=False)
    estimates = []
    for combo in combos:
        units = [ChainUnit(b, model.networks[b.id], model.indexes[b.id])
                 for b in combo]
        empty_or_dead = any(u.bubble.empty or u.network.degenerate for u in units)
        if empty_or_dead or len(units) == 1:
            sub = SubstituteQuery(units, [])
        else:
            sub = order_chain(units, query, model.catalog)
        est = _estimate_substitute(sub, query, model.catalog, method, samples,
                                   rng, propagate)
        estimates.append(est)
        report.substitutes.append(SubstituteReport(
            bubbles=[b.id for b in combo],
            chain=sub.bubble_ids,
            estimate=est))
    final = combine_estimates(estimates, query.agg_func)
    report.value = final.value
    report.relevant = final.relevant
    report.latency_ms = (time.perf_counter() - start) * 1000.0
    return final, report
