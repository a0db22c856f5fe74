"""Exact execution, q-error, workload generation, and benchmark reports.

``exact_execute`` is the internal ground truth: predicate masks over the
encoded columns, hash joins along the query's join conditions, and a plain
aggregate over the surviving rows.  The q-error of an estimate is
max(true/est, est/true); the undefined zero cases follow fixed conventions
(1.0 when both sides are zero or absent, infinity when only one is).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, Table, format_date, DATE, CATEGORICAL, FLOAT
from .errors import DataError
from .sql import BoundQuery, bind, parse

INFINITE = float("inf")


def _relation_mask(table: Table, query: BoundQuery, relation: str) -> np.ndarray:
    mask = np.ones(table.n_rows, dtype=bool)
    for pred in query.predicates_for(relation):
        column = table.column(pred.attribute)
        mask &= pred.code_region(column).mask(column.codes)
    return mask


def exact_execute(query: BoundQuery, catalog: Catalog) -> float | None:
    """Exact answer over the raw tables; None for empty MIN/MAX/AVG results."""
    rows: dict[str, np.ndarray] = {}
    first = query.relations[0]
    base = catalog.table(first)
    rows[first] = np.nonzero(_relation_mask(base, query, first))[0]

    remaining = list(query.joins)
    while remaining:
        progressed = False
        for cond in list(remaining):
            sides = [(cond.rel_a, cond.attr_a, cond.rel_b, cond.attr_b),
                     (cond.rel_b, cond.attr_b, cond.rel_a, cond.attr_a)]
            for known_rel, known_attr, new_rel, new_attr in sides:
                if known_rel in rows and new_rel not in rows:
                    new_table = catalog.table(new_rel)
                    new_mask = _relation_mask(new_table, query, new_rel)
                    new_col = new_table.column(new_attr)
                    by_value: dict = {}
                    for idx in np.nonzero(new_mask)[0]:
                        code = new_col.codes[idx]
                        if new_col.has_null and code == new_col.n_values:
                            continue
                        by_value.setdefault(new_col.decoded[code], []).append(int(idx))
                    known_col = catalog.table(known_rel).column(known_attr)
                    per_code = [by_value.get(known_col.decoded[c], ())
                                for c in range(known_col.n_values)]
                    codes = known_col.codes[rows[known_rel]]
                    if all(len(m) <= 1 for m in per_code):
                        # unique matches (the FK case): vectorized probe
                        match = np.array([m[0] if m else -1 for m in per_code] + [-1],
                                         dtype=np.int64)
                        probed = match[np.minimum(codes, known_col.n_values)]
                        keep_mask = probed >= 0
                        for rel in rows:
                            rows[rel] = rows[rel][keep_mask]
                        rows[new_rel] = probed[keep_mask]
                    else:
                        keep: list[int] = []
                        new_rows: list[int] = []
                        for pos, code in enumerate(codes):
                            if code >= known_col.n_values:
                                continue
                            for nidx in per_code[code]:
                                keep.append(pos)
                                new_rows.append(nidx)
                        keep_a = np.array(keep, dtype=np.int64)
                        for rel in rows:
                            rows[rel] = rows[rel][keep_a]
                        rows[new_rel] = np.array(new_rows, dtype=np.int64)
                    remaining.remove(cond)
                    progressed = True
                    break
                if known_rel in rows and new_rel in rows:
                    # both sides already joined in: filter for equality
                    col_a = catalog.table(known_rel).column(known_attr)
                    col_b = catalog.table(new_rel).column(new_attr)
                    va = col_a.decoded[np.minimum(col_a.codes[rows[known_rel]],
                                                  col_a.n_values - 1)]
                    vb = col_b.decoded[np.minimum(col_b.codes[rows[new_rel]],
                                                  col_b.n_values - 1)]
                    keep_mask = va == vb
                    if col_a.has_null:
                        keep_mask &= col_a.codes[rows[known_rel]] != col_a.n_values
                    if col_b.has_null:
                        keep_mask &= col_b.codes[rows[new_rel]] != col_b.n_values
                    for rel in rows:
                        rows[rel] = rows[rel][keep_mask]
                    remaining.remove(cond)
                    progressed = True
                    break
            if progressed:
                break
        if not progressed:
            raise DataError("join conditions do not connect the query relations")

    n_result = len(rows[first])
    if query.agg_func == "COUNT" or query.agg_attribute is None:
        return float(n_result)
    if n_result == 0:
        return None
    table = catalog.table(query.agg_relation)
    column = table.column(query.agg_attribute)
    codes = column.codes[rows[query.agg_relation]]
    values = column.decoded[np.minimum(codes, column.n_values - 1)]
    if column.has_null:
        non_null = codes != column.n_values
        values = values[non_null]
        if len(values) == 0:
            return None
    if query.agg_func == "SUM":
        return float(values.sum()) if column.attr_type.kind != CATEGORICAL else None
    if query.agg_func == "AVG":
        return float(values.mean())
    if query.agg_func == "MIN":
        v = values.min()
        return v if column.attr_type.kind == CATEGORICAL else float(v)
    if query.agg_func == "MAX":
        v = values.max()
        return v if column.attr_type.kind == CATEGORICAL else float(v)
    raise ValueError(f"unknown aggregate {query.agg_func!r}")


def q_error(truth: float | None, estimate: float | None) -> float:
    """max(true/est, est/true) with fixed conventions for the undefined cases."""
    if truth is None and estimate is None:
        return 1.0
    if truth is None or estimate is None:
        return INFINITE
    if isinstance(truth, str) or isinstance(estimate, str):
        # MIN/MAX over a categorical attribute: only exactness is meaningful
        return 1.0 if truth == estimate else INFINITE
    if truth == 0.0 and estimate == 0.0:
        return 1.0
    if truth == 0.0 or estimate == 0.0:
        return INFINITE
    if (truth > 0) != (estimate > 0):
        return INFINITE
    t, e = abs(truth), abs(estimate)
    return max(t / e, e / t)


def _format_value(value, atype) -> str:
    if atype.kind == DATE:
        return f"'{format_date(int(value))}'"
    if atype.kind == CATEGORICAL:
        return f"'{value}'"
    if isinstance(value, float):
        return repr(float(value))
    return str(int(value))


def generate_workload(catalog: Catalog, n: int, joins: tuple[int, int] = (0, 0),
                      preds: tuple[int, int] = (2, 5), seed: int = 0,
                      aggregates: tuple[str, ...] = ("COUNT", "SUM", "AVG", "MIN", "MAX"),
                      domain_fraction: float = 0.1) -> list[str]:
    """Deterministically sample aggregation queries as SQL text.

    Join paths are random walks over the FK graph; most predicate literals are
    sampled from actual rows (so results are rarely empty), the rest uniformly
    from the attribute's min/max span.
    """
    rng = np.random.default_rng(seed)
    longest = catalog.fk_graph.longest_path_edges()
    lo_j, hi_j = joins
    if lo_j > longest:
        raise DataError(f"requested at least {lo_j} joins but the longest "
                        f"FK path has {longest}")
    hi_j = min(hi_j, longest)

    queries: list[str] = []
    while len(queries) < n:
        n_joins = int(rng.integers(lo_j, hi_j + 1))
        start = catalog.relations[int(rng.integers(0, len(catalog.relations)))]
        path = [start]
        conds = []
        ok = True
        for _ in range(n_joins):
            options = [(other, edge) for other, edge in
                       catalog.fk_graph.neighbors(path[-1]) if other not in path]
            if not options:
                ok = False
                break
            other, edge = options[int(rng.integers(0, len(options)))]
            path.append(other)
            conds.append(edge)
        if not ok:
            continue

        numeric_attrs = []
        all_attrs = []
        for rel in path:
            schema = catalog.table(rel).schema
            for attr, atype in schema.attributes:
                all_attrs.append((rel, attr, atype))
                if atype.numeric:
                    numeric_attrs.append((rel, attr, atype))
        agg = aggregates[int(rng.integers(0, len(aggregates)))]
        if agg == "COUNT":
            agg_text = "COUNT(*)"
        else:
            if not numeric_attrs:
                continue
            rel, attr, _ = numeric_attrs[int(rng.integers(0, len(numeric_attrs)))]
            agg_text = f"{agg}({rel}.{attr})"

        n_preds = int(rng.integers(preds[0], preds[1] + 1))
        parts = [f"{e.from_relation}.{e.from_attribute} = "
                 f"{e.to_relation}.{e.to_attribute}" for e in conds]
        for _ in range(n_preds):
            rel, attr, atype = all_attrs[int(rng.integers(0, len(all_attrs)))]
            column = catalog.table(rel).column(attr)
            if column.n_values == 0:
                continue
            from_domain = rng.random() < domain_fraction
            if from_domain and atype.kind != CATEGORICAL:
                lo_v, hi_v = column.decoded[0], column.decoded[-1]
                value = lo_v + (hi_v - lo_v) * rng.random()
                if atype.kind != FLOAT:
                    value = int(round(value))
            else:
                row = int(rng.integers(0, len(column.codes)))
                code = min(int(column.codes[row]), column.n_values - 1)
                value = column.decoded[code]
            if atype.kind == CATEGORICAL:
                op = "="
            else:
                op = ["=", "<=", ">=", "between"][int(rng.integers(0, 4))]
            if op == "between":
                row2 = int(rng.integers(0, len(column.codes)))
                code2 = min(int(column.codes[row2]), column.n_values - 1)
                value2 = column.decoded[code2]
                lo_v, hi_v = sorted((value, value2))
                parts.append(f"{rel}.{attr} BETWEEN {_format_value(lo_v, atype)} "
                             f"AND {_format_value(hi_v, atype)}")
            else:
                parts.append(f"{rel}.{attr} {op} {_format_value(value, atype)}")

        sql = f"SELECT {agg_text} FROM {', '.join(path)}"
        if parts:
            sql += " WHERE " + " AND ".join(parts)
        queries.append(sql)
    return queries


@dataclass
class QueryResult:
    sql: str
    truth: float | None
    estimate: float | None
    qerror: float
    latency_ms: float


@dataclass
class ConfigResult:
    label: str
    results: list[QueryResult] = field(default_factory=list)
    model_bytes: int = 0

    def _finite(self) -> list[float]:
        return [r.qerror for r in self.results if math.isfinite(r.qerror)]

    @property
    def failed(self) -> int:
        return sum(1 for r in self.results if not math.isfinite(r.qerror))

    def percentile(self, p: float) -> float:
        finite = sorted(self._finite())
        if not finite:
            return INFINITE
        rank = max(1, math.ceil(p / 100.0 * len(finite)))
        return finite[rank - 1]

    @property
    def median(self) -> float:
        return self.percentile(50.0)

    @property
    def p95(self) -> float:
        return self.percentile(95.0)

    @property
    def max_qerror(self) -> float:
        finite = self._finite()
        return max(finite) if finite else INFINITE

    @property
    def mean_qerror(self) -> float:
        finite = self._finite()
        return sum(finite) / len(finite) if finite else INFINITE

    @property
    def mean_latency_ms(self) -> float:
        if not self.results:
            return 0.0
        return sum(r.latency_ms for r in self.results) / len(self.results)


@dataclass
class BenchReport:
    configs: list[ConfigResult] = field(default_factory=list)

    def summary_text(self) -> str:
        headers = ["config", "median", "95th", "max", "avg", "failed",
                   "avg ms", "model KB"]
        rows = []
        for c in self.configs:
            rows.append([
                c.label,
                f"{c.median:.3f}", f"{c.p95:.3f}", f"{c.max_qerror:.3f}",
                f"{c.mean_qerror:.3f}", str(c.failed),
                f"{c.mean_latency_ms:.2f}", f"{c.model_bytes / 1024:.1f}",
            ])
        widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
                  for i, h in enumerate(headers)]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        lines.append("  ".join("-" * w for w in widths))
        for r in rows:
            lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))))
        return "\n".join(lines)

    def results_rows(self) -> list[str]:
        """Machine-readable rows; excludes wall-clock so reruns are identical."""
        lines = ["config\tquery\ttruth\testimate\tqerror"]
        for c in self.configs:
            for r in c.results:
                t = "" if r.truth is None else repr(r.truth)
                e = "" if r.estimate is None else repr(r.estimate)
                q = "inf" if not math.isfinite(r.qerror) else repr(r.qerror)
                lines.append(f"{c.label}\t{r.sql}\t{t}\t{e}\t{q}")
        return lines

    def timing_rows(self) -> list[str]:
        lines = ["config\tquery\tlatency_ms"]
        for c in self.configs:
            for r in c.results:
                lines.append(f"{c.label}\t{r.sql}\t{r.latency_ms:.3f}")
        return lines


def run_benchmark(catalog: Catalog, workload: list[str], models: dict[str, object],
                  sigma="all", method: str = "ps", samples: int = 1000,
                  seed: int = 0, propagate: bool = True,
                  model_bytes: dict[str, int] | None = None) -> BenchReport:
    """Run every workload query against every model and collect q-errors.

    Truth values are computed once per query; latency covers the estimation
    call only.
    """
    from .estimator import estimate_result

    report = BenchReport()
    bound = []
    truths = []
    for sql in workload:
        q = bind(parse(sql), catalog)
        bound.append(q)
        truths.append(exact_execute(q, catalog))

    for label in sorted(models):
        model = models[label]
        config = ConfigResult(label=label,
                              model_bytes=(model_bytes or {}).get(label, 0))
        for q, truth in zip(bound, truths):
            start = time.perf_counter()
            est, _ = estimate_result(q, model, sigma=sigma, method=method,
                                     samples=samples, seed=seed,
                                     propagate=propagate)
            latency = (time.perf_counter() - start) * 1000.0
            value = est.value
            config.results.append(QueryResult(
                sql=q.sql, truth=truth, estimate=value,
                qerror=q_error(truth, value), latency_ms=latency))
        report.configs.append(config)
    return report
