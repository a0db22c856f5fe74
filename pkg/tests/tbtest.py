"""Shared helpers for the test suite: in-memory tables, datasets, oracles."""

from __future__ import annotations

import itertools

import numpy as np

from tuplebubbles.catalog import AttributeType, CATEGORICAL, Catalog, Column, \
    FkGraph, INTEGER, Schema, Table, declare_fk_graph
from tuplebubbles.regions import CodeRegion


def make_column(name: str, values: list, kind: str = INTEGER) -> Column:
    present = [v for v in values if v is not None]
    has_null = len(present) != len(values)
    if kind == CATEGORICAL:
        arr = np.array(present, dtype=str) if present else np.array([], dtype="U1")
    else:
        arr = np.array(present, dtype=np.int64)
    domain = np.unique(arr)
    codes = np.empty(len(values), dtype=np.int64)
    j = 0
    pos = np.searchsorted(domain, arr)
    for i, v in enumerate(values):
        if v is None:
            codes[i] = len(domain)
        else:
            codes[i] = pos[j]
            j += 1
    return Column(name, AttributeType(kind), codes, domain, has_null)


def make_table(name: str, columns: dict[str, list],
               kinds: dict[str, str] | None = None,
               primary_key: str | None = None) -> Table:
    kinds = kinds or {}
    cols = {}
    attrs = []
    n = None
    for attr, values in columns.items():
        kind = kinds.get(attr, CATEGORICAL if values and isinstance(
            next(v for v in values if v is not None), str) else INTEGER)
        cols[attr] = make_column(attr, values, kind)
        attrs.append((attr, AttributeType(kind)))
        n = len(values) if n is None else n
        assert len(values) == n
    schema = Schema(relation=name, attributes=attrs, primary_key=primary_key)
    return Table(schema, cols, n or 0)


def single_table_catalog(table: Table) -> Catalog:
    fk = declare_fk_graph([table.schema])
    return Catalog({table.name: table}, fk)


def region_from_codes(codes: list[int]) -> CodeRegion:
    return CodeRegion.from_intervals([(c, c) for c in codes])


def region_interval(lo: int, hi: int) -> CodeRegion:
    return CodeRegion.from_intervals([(lo, hi)])


def random_table(rng: np.random.Generator, name: str = "t",
                 n_attrs: int = 4, n_rows: int = 60,
                 max_card: int = 6) -> Table:
    """Random integer table with mixed dependence (some attrs derived)."""
    columns = {}
    base = rng.integers(0, max_card, size=n_rows)
    for i in range(n_attrs):
        style = rng.integers(0, 3)
        if style == 0:
            col = rng.integers(0, rng.integers(2, max_card + 1), size=n_rows)
        elif style == 1:
            col = (base + rng.integers(0, 2, size=n_rows)) % max_card
        else:
            col = base // max(1, int(rng.integers(1, 3)))
        columns[f"a{i}"] = [int(v) for v in col]
    return make_table(name, columns)


def enumerate_network_joint(net) -> dict[tuple[int, ...], float]:
    """Brute-force joint over an exact-CPT network, keyed by class indices
    in node-name order; independent of the message-passing code."""
    nodes = sorted(net.cpts)
    domains = [range(net.classes(n).n_classes) for n in nodes]
    idx = {n: i for i, n in enumerate(nodes)}
    joint = {}
    for combo in itertools.product(*domains):
        p = 1.0
        for node in nodes:
            cpt = net.cpts[node]
            c = combo[idx[node]]
            if cpt.parent is None:
                p *= cpt.probs[0, c]
            else:
                p *= cpt.probs[combo[idx[cpt.parent]], c]
        joint[combo] = p
    return joint


def joint_query(net, joint: dict, evidence: dict) -> float:
    """Sum the enumerated joint over evidence regions (weight semantics as
    the engine: fractional bucket overlap)."""
    nodes = sorted(net.cpts)
    weights = {}
    for attr, region in evidence.items():
        weights[attr] = net.classes(attr).weight_vector(region)
    total = 0.0
    for combo, p in joint.items():
        w = p
        for attr, vec in weights.items():
            w *= vec[combo[nodes.index(attr)]]
        total += w
    return total


def joint_marginal(net, joint: dict, target: str, evidence: dict) -> np.ndarray:
    nodes = sorted(net.cpts)
    t = nodes.index(target)
    weights = {attr: net.classes(attr).weight_vector(region)
               for attr, region in evidence.items()}
    out = np.zeros(net.classes(target).n_classes)
    for combo, p in joint.items():
        w = p
        for attr, vec in weights.items():
            w *= vec[combo[nodes.index(attr)]]
        out[combo[t]] += w
    return out


def prufer_trees(n: int):
    """All labeled spanning trees on n nodes via Prufer sequences."""
    if n == 1:
        yield []
        return
    if n == 2:
        yield [(0, 1)]
        return
    import heapq
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        heap = [i for i in range(n) if degree[i] == 1]
        heapq.heapify(heap)
        edges = []
        for v in seq:
            leaf = heapq.heappop(heap)
            edges.append((leaf, v))
            degree[v] -= 1
            if degree[v] == 1:
                heapq.heappush(heap, v)
        u = heapq.heappop(heap)
        w = heapq.heappop(heap)
        edges.append((u, w))
        yield edges


def nested_loop_execute(query, catalog) -> float | None:
    """Naive independent evaluator: cross product + condition checks."""
    tables = {rel: catalog.table(rel) for rel in query.relations}

    def row_value(rel, attr, idx):
        col = tables[rel].column(attr)
        code = col.codes[idx]
        return col.decode_code(int(code))

    matches = []
    index_ranges = [range(tables[rel].n_rows) for rel in query.relations]
    for combo in itertools.product(*index_ranges):
        assignment = dict(zip(query.relations, combo))
        ok = True
        for join in query.joins:
            va = row_value(join.rel_a, join.attr_a, assignment[join.rel_a])
            vb = row_value(join.rel_b, join.attr_b, assignment[join.rel_b])
            if va is None or vb is None or va != vb:
                ok = False
                break
        if not ok:
            continue
        for pred in query.predicates:
            v = row_value(pred.relation, pred.attribute, assignment[pred.relation])
            if v is None:
                ok = False
                break
            if pred.op == "=":
                ok = v == pred.value
            elif pred.op == "<":
                ok = v < pred.value
            elif pred.op == "<=":
                ok = v <= pred.value
            elif pred.op == ">":
                ok = v > pred.value
            elif pred.op == ">=":
                ok = v >= pred.value
            elif pred.op == "between":
                ok = pred.value[0] <= v <= pred.value[1]
            if not ok:
                break
        if ok:
            matches.append(assignment)

    if query.agg_func == "COUNT" or query.agg_attribute is None:
        return float(len(matches))
    values = [row_value(query.agg_relation, query.agg_attribute,
                        m[query.agg_relation]) for m in matches]
    values = [v for v in values if v is not None]
    if not values:
        return None
    if query.agg_func == "SUM":
        return float(sum(values))
    if query.agg_func == "AVG":
        return float(sum(values)) / len(values)
    if query.agg_func == "MIN":
        return min(values)
    if query.agg_func == "MAX":
        return max(values)
    raise AssertionError(query.agg_func)
