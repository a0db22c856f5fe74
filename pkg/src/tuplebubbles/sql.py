"""SQL front end for the supported aggregation subset.

Grammar (keywords case-insensitive)::

    SELECT <AGG>( <column> | * ) FROM rel [alias] (, rel [alias])*
        [WHERE cond (AND cond)*]
    AGG    := COUNT | SUM | AVG | MIN | MAX
    cond   := col = col                     -- equi-join
            | col op literal                -- op in =, <, <=, >, >=
            | col BETWEEN literal AND literal
    col    := [qualifier.]name
    literal:= integer | decimal | 'string'  -- dates as 'dd.mm.yyyy'

GROUP BY, OR, subqueries, inequality joins and everything else outside the
subset are rejected with a named error.  Binding resolves names against the
catalog, type-checks literals, folds repeated predicates on one attribute,
and classifies join conditions against the declared FK graph.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .catalog import CATEGORICAL, Catalog, DATE, FLOAT, INTEGER, parse_date
from .errors import BindError, ParseError
from .regions import Predicate

AGG_FUNCTIONS = ("COUNT", "SUM", "AVG", "MIN", "MAX")
KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "BETWEEN"}
UNSUPPORTED_KEYWORDS = {
    "GROUP": "GROUP BY",
    "ORDER": "ORDER BY",
    "HAVING": "HAVING",
    "OR": "OR",
    "NOT": "NOT",
    "IN": "IN",
    "LIKE": "LIKE",
    "JOIN": "explicit JOIN syntax (use the FROM list)",
    "LIMIT": "LIMIT",
    "DISTINCT": "DISTINCT",
    "UNION": "UNION",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d+|\d+)
  | (?P<string>'(?:[^'])*')
  | (?P<op><=|>=|<>|!=|=|<|>)
  | (?P<punct>[(),.*])
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(sql: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(sql):
        m = _TOKEN_RE.match(sql, pos)
        if not m:
            raise ParseError(f"unexpected character {sql[pos]!r}", pos)
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(sql)))
    return tokens


@dataclass(frozen=True)
class ColumnRef:
    qualifier: str | None
    name: str

    def __str__(self) -> str:
        return f"{self.qualifier}.{self.name}" if self.qualifier else self.name


@dataclass(frozen=True)
class Condition:
    left: ColumnRef
    op: str                    # '=', '<', '<=', '>', '>=', 'between'
    right: object              # literal, ColumnRef, or (lo, hi) for BETWEEN


@dataclass(frozen=True)
class ParsedQuery:
    agg_func: str
    agg_arg: ColumnRef | None          # None for COUNT(*)
    relations: tuple[tuple[str, str | None], ...]
    conditions: tuple[Condition, ...]


class _Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.tokens = tokenize(sql)
        self.i = 0

    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, tok.pos)

    def expect_keyword(self, keyword: str) -> Token:
        tok = self.next()
        if tok.kind != "ident" or tok.text.upper() != keyword:
            raise self.error(f"expected {keyword}", tok)
        return tok

    def keyword_ahead(self, keyword: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.upper() == keyword

    def check_unsupported(self, tok: Token):
        if tok.kind == "ident" and tok.text.upper() in UNSUPPORTED_KEYWORDS:
            name = UNSUPPORTED_KEYWORDS[tok.text.upper()]
            raise self.error(f"unsupported construct: {name}", tok)

    def parse(self) -> ParsedQuery:
        self.expect_keyword("SELECT")
        agg_func, agg_arg = self.parse_aggregate()
        self.expect_keyword("FROM")
        relations = self.parse_relations()
        conditions: tuple[Condition, ...] = ()
        if self.keyword_ahead("WHERE"):
            self.next()
            conditions = tuple(self.parse_conditions())
        tail = self.peek()
        self.check_unsupported(tail)
        if tail.kind != "eof":
            raise self.error(f"unexpected trailing input {tail.text!r}", tail)
        return ParsedQuery(agg_func, agg_arg, tuple(relations), conditions)

    def parse_aggregate(self):
        tok = self.next()
        if tok.kind != "ident" or tok.text.upper() not in AGG_FUNCTIONS:
            raise self.error("expected an aggregate function "
                             "(COUNT, SUM, AVG, MIN, MAX)", tok)
        func = tok.text.upper()
        opener = self.next()
        if opener.text != "(":
            raise self.error("expected '(' after aggregate function", opener)
        if self.peek().text == "*":
            if func != "COUNT":
                raise self.error(f"'*' is only valid in COUNT(*), not {func}")
            self.next()
            arg = None
        else:
            arg = self.parse_column_ref()
        closer = self.next()
        if closer.text != ")":
            raise self.error("expected ')'", closer)
        return func, arg

    def parse_relations(self):
        relations = []
        while True:
            tok = self.next()
            self.check_unsupported(tok)
            if tok.text == "(" or (tok.kind == "ident" and tok.text.upper() == "SELECT"):
                raise self.error("unsupported construct: subquery", tok)
            if tok.kind != "ident":
                raise self.error("expected a relation name", tok)
            name = tok.text
            alias = None
            nxt = self.peek()
            if nxt.kind == "ident" and nxt.text.upper() not in KEYWORDS \
                    and nxt.text.upper() not in UNSUPPORTED_KEYWORDS:
                alias = self.next().text
            if self.peek().text == ",":
                self.next()
                relations.append((name, alias))
                continue
            relations.append((name, alias))
            return relations

    def parse_column_ref(self) -> ColumnRef:
        tok = self.next()
        self.check_unsupported(tok)
        if tok.kind != "ident":
            raise self.error("expected a column reference", tok)
        if self.peek().text == ".":
            self.next()
            attr = self.next()
            if attr.kind != "ident":
                raise self.error("expected an attribute name after '.'", attr)
            return ColumnRef(tok.text, attr.text)
        return ColumnRef(None, tok.text)

    def parse_conditions(self):
        conditions = [self.parse_condition()]
        while True:
            tok = self.peek()
            self.check_unsupported(tok)
            if self.keyword_ahead("AND"):
                self.next()
                conditions.append(self.parse_condition())
            else:
                return conditions

    def parse_condition(self) -> Condition:
        left = self.parse_column_ref()
        tok = self.next()
        if tok.kind == "ident" and tok.text.upper() == "BETWEEN":
            lo = self.parse_literal()
            self.expect_keyword("AND")
            hi = self.parse_literal()
            return Condition(left, "between", (lo, hi))
        if tok.kind != "op":
            self.check_unsupported(tok)
            raise self.error("expected a comparison operator", tok)
        if tok.text in ("<>", "!="):
            raise self.error("unsupported operator: inequality (<>/!=)", tok)
        op = tok.text
        rhs_tok = self.peek()
        if rhs_tok.kind == "ident":
            right = self.parse_column_ref()
            if op != "=":
                raise self.error("unsupported construct: inequality join "
                                 f"(columns may only be joined with '=')", tok)
            return Condition(left, "=", right)
        literal = self.parse_literal()
        return Condition(left, op, literal)

    def parse_literal(self):
        tok = self.next()
        if tok.kind == "number":
            return float(tok.text) if "." in tok.text else int(tok.text)
        if tok.kind == "string":
            return tok.text[1:-1]
        self.check_unsupported(tok)
        raise self.error("expected a literal", tok)


def parse(sql: str) -> ParsedQuery:
    """Parse one query; raises ParseError with a position on bad input."""
    return _Parser(sql).parse()


def _format_literal(value) -> str:
    if isinstance(value, str):
        return f"'{value}'"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_sql(query: ParsedQuery) -> str:
    """Render a parsed query back to text; reparsing gives an identical AST."""
    arg = str(query.agg_arg) if query.agg_arg is not None else "*"
    rels = ", ".join(name if alias is None else f"{name} {alias}"
                     for name, alias in query.relations)
    text = f"SELECT {query.agg_func}({arg}) FROM {rels}"
    parts = []
    for cond in query.conditions:
        if isinstance(cond.right, ColumnRef):
            parts.append(f"{cond.left} = {cond.right}")
        elif cond.op == "between":
            lo, hi = cond.right
            parts.append(f"{cond.left} BETWEEN {_format_literal(lo)} "
                         f"AND {_format_literal(hi)}")
        else:
            parts.append(f"{cond.left} {cond.op} {_format_literal(cond.right)}")
    if parts:
        text += " WHERE " + " AND ".join(parts)
    return text


@dataclass(frozen=True)
class JoinCondition:
    rel_a: str
    attr_a: str
    rel_b: str
    attr_b: str
    fk_edge: object = None     # FkEdge when the pair matches a declared FK


@dataclass
class BoundQuery:
    agg_func: str
    agg_relation: str | None   # None for COUNT(*)
    agg_attribute: str | None
    relations: list[str]
    joins: list[JoinCondition]
    predicates: list[Predicate]
    sql: str = ""

    def predicates_for(self, relation: str) -> list[Predicate]:
        return [p for p in self.predicates if p.relation == relation]


def _resolve_ref(ref: ColumnRef, alias_map: dict[str, str],
                 catalog: Catalog) -> tuple[str, str]:
    if ref.qualifier is not None:
        rel = alias_map.get(ref.qualifier)
        if rel is None:
            raise BindError(f"unknown relation or alias {ref.qualifier!r}")
        if not catalog.table(rel).schema.has_attribute(ref.name):
            raise BindError(f"relation {rel!r} has no attribute {ref.name!r}")
        return rel, ref.name
    holders = [rel for rel in dict.fromkeys(alias_map.values())
               if catalog.table(rel).schema.has_attribute(ref.name)]
    if not holders:
        raise BindError(f"no query relation has an attribute {ref.name!r}")
    if len(holders) > 1:
        raise BindError(f"ambiguous attribute {ref.name!r}: "
                        f"found in {', '.join(sorted(holders))}")
    return holders[0], ref.name


def _convert_literal(value, relation: str, attribute: str, catalog: Catalog):
    atype = catalog.table(relation).schema.attribute_type(attribute)
    kind = atype.kind
    if kind == INTEGER:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BindError(f"{relation}.{attribute} is integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            return value   # comparing an integer column against 2.5 is fine
        return int(value)
    if kind == FLOAT:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise BindError(f"{relation}.{attribute} is float, got {value!r}")
        return float(value)
    if kind == DATE:
        if not isinstance(value, str):
            raise BindError(f"{relation}.{attribute} is a date, expected a "
                            f"'dd.mm.yyyy' string literal, got {value!r}")
        try:
            return parse_date(value)
        except ValueError as exc:
            raise BindError(str(exc)) from None
    if kind == CATEGORICAL:
        if not isinstance(value, str):
            raise BindError(f"{relation}.{attribute} is categorical, expected "
                            f"a string literal, got {value!r}")
        return value
    raise BindError(f"unhandled attribute kind {kind!r}")


def bind(query: ParsedQuery, catalog: Catalog) -> BoundQuery:
    """Resolve names, encode literals, and classify joins against the FK graph."""
    alias_map: dict[str, str] = {}
    relations: list[str] = []
    for name, alias in query.relations:
        if name not in catalog.tables:
            raise BindError(f"unknown relation {name!r}")
        if name in relations:
            raise BindError(f"relation {name!r} listed twice (self-joins are "
                            "not supported)")
        relations.append(name)
        for key in (alias, name):
            if key is None:
                continue
            if key in alias_map and alias_map[key] != name:
                raise BindError(f"alias {key!r} is ambiguous")
            alias_map[key] = name

    agg_rel = agg_attr = None
    if query.agg_arg is not None:
        agg_rel, agg_attr = _resolve_ref(query.agg_arg, alias_map, catalog)
        atype = catalog.table(agg_rel).schema.attribute_type(agg_attr)
        if query.agg_func in ("SUM", "AVG") and not atype.numeric:
            raise BindError(f"{query.agg_func} over categorical attribute "
                            f"{agg_rel}.{agg_attr}")

    joins: list[JoinCondition] = []
    predicates: list[Predicate] = []
    for cond in query.conditions:
        rel_l, attr_l = _resolve_ref(cond.left, alias_map, catalog)
        if isinstance(cond.right, ColumnRef):
            rel_r, attr_r = _resolve_ref(cond.right, alias_map, catalog)
            if rel_l == rel_r:
                raise BindError(f"join condition joins {rel_l!r} with itself")
            type_l = catalog.table(rel_l).schema.attribute_type(attr_l)
            type_r = catalog.table(rel_r).schema.attribute_type(attr_r)
            if type_l.kind != type_r.kind:
                raise BindError(
                    f"type mismatch in join {rel_l}.{attr_l} = {rel_r}.{attr_r}: "
                    f"{type_l.kind} vs {type_r.kind}")
            edge = catalog.fk_graph.find_edge(rel_l, attr_l, rel_r, attr_r)
            joins.append(JoinCondition(rel_l, attr_l, rel_r, attr_r, edge))
        elif cond.op == "between":
            lo = _convert_literal(cond.right[0], rel_l, attr_l, catalog)
            hi = _convert_literal(cond.right[1], rel_l, attr_l, catalog)
            predicates.append(Predicate(rel_l, attr_l, "between", (lo, hi)))
        else:
            value = _convert_literal(cond.right, rel_l, attr_l, catalog)
            predicates.append(Predicate(rel_l, attr_l, cond.op, value))

    if len(relations) > 1:
        seen = {relations[0]}
        frontier = [relations[0]]
        while frontier:
            rel = frontier.pop()
            for j in joins:
                other = None
                if j.rel_a == rel and j.rel_b not in seen:
                    other = j.rel_b
                elif j.rel_b == rel and j.rel_a not in seen:
                    other = j.rel_a
                if other:
                    seen.add(other)
                    frontier.append(other)
        if seen != set(relations):
            missing = sorted(set(relations) - seen)
            raise BindError(f"join graph is not connected; unreachable "
                            f"relations: {', '.join(missing)}")

    return BoundQuery(query.agg_func, agg_rel, agg_attr, relations,
                      joins, predicates, sql=to_sql(query))
