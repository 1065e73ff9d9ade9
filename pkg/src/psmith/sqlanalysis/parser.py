"""Recursive-descent parser for the SELECT subset of SQLite found in
Spider-style corpora.

The AST is deliberately small: it carries exactly what operator extraction
and skeleton abstraction need, nothing more. DML/DDL is out of scope here
(the evaluator rejects it before execution).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError
from .tokenizer import Token, tokenize


# --- expression nodes -----------------------------------------------------

@dataclass(frozen=True)
class Lit:
    """String/number/NULL literal or a bare ``*`` wildcard."""
    text: str


@dataclass(frozen=True)
class Col:
    name: str  # possibly dotted (alias.column) or "t.*"


@dataclass(frozen=True)
class Func:
    name: str  # upper-cased
    distinct: bool
    args: tuple


@dataclass(frozen=True)
class Bin:
    op: str  # canonical token: = != < > <= >= + - * / % ||
    left: object
    right: object


@dataclass(frozen=True)
class Unary:
    op: str  # NOT or -
    operand: object


@dataclass(frozen=True)
class InExpr:
    lhs: object
    negated: bool
    values: tuple          # () when subquery is set
    subquery: object


@dataclass(frozen=True)
class LikeExpr:
    lhs: object
    negated: bool
    pattern: object


@dataclass(frozen=True)
class BetweenExpr:
    lhs: object
    negated: bool
    low: object
    high: object


@dataclass(frozen=True)
class IsExpr:
    lhs: object
    negated: bool
    rhs: object


@dataclass(frozen=True)
class ExistsExpr:
    negated: bool
    subquery: object


@dataclass(frozen=True)
class CaseExpr:
    operand: object
    whens: tuple  # ((cond, result), ...)
    default: object


@dataclass(frozen=True)
class Subquery:
    query: "Query"


# --- statement nodes ------------------------------------------------------

@dataclass(frozen=True)
class Source:
    """One entry in a FROM list: a table name or a parenthesized subquery."""
    table: str | None
    subquery: Subquery | None
    joined: bool          # preceded by a JOIN keyword (comma-joins are not)
    on: object            # ON condition, when present


@dataclass(frozen=True)
class SelectCore:
    distinct: bool
    items: tuple
    sources: tuple        # of Source
    where: object
    group_by: tuple
    having: object


@dataclass(frozen=True)
class Compound:
    op: str               # UNION | INTERSECT | EXCEPT
    all: bool
    left: object          # SelectCore or Compound
    right: SelectCore


@dataclass(frozen=True)
class OrderKey:
    expr: object
    direction: str | None  # ASC / DESC when explicit


@dataclass(frozen=True)
class Query:
    body: object          # SelectCore or Compound
    order_by: tuple = ()
    limit: tuple = ()     # (limit,) or (limit, offset)


JOIN_INTRO = {"JOIN", "INNER", "LEFT", "RIGHT", "FULL", "CROSS", "NATURAL"}
COMPOUND_OPS = {"UNION", "INTERSECT", "EXCEPT"}


class _Parser:
    def __init__(self, tokens: list[Token], sql: str):
        self.tokens = tokens
        self.sql = sql
        self.i = 0

    # -- token plumbing --

    def peek(self, offset: int = 0) -> Token | None:
        j = self.i + offset
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of input in {self.sql!r}")
        self.i += 1
        return tok

    def at_keyword(self, *names: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "KEYWORD" and tok.value in names

    def accept_keyword(self, *names: str) -> bool:
        if self.at_keyword(*names):
            self.i += 1
            return True
        return False

    def expect_keyword(self, name: str) -> None:
        if not self.accept_keyword(name):
            raise ParseError(f"expected {name} at {self._where()}")

    def at_punct(self, value: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == "PUNCT" and tok.value == value

    def accept_punct(self, value: str) -> bool:
        if self.at_punct(value):
            self.i += 1
            return True
        return False

    def expect_punct(self, value: str) -> None:
        if not self.accept_punct(value):
            raise ParseError(f"expected {value!r} at {self._where()}")

    def _where(self) -> str:
        tok = self.peek()
        if tok is None:
            return f"end of {self.sql!r}"
        return f"offset {tok.pos} ({tok.value!r}) in {self.sql!r}"

    # -- grammar --

    def parse_query(self) -> Query:
        body: object = self.parse_select_core()
        while self.at_keyword(*COMPOUND_OPS):
            op = self.next().value
            all_ = self.accept_keyword("ALL")
            right = self.parse_select_core()
            body = Compound(op, all_, body, right)
        order_by: list[OrderKey] = []
        if self.accept_keyword("ORDER"):
            self.expect_keyword("BY")
            while True:
                expr = self.parse_expr()
                direction = None
                if self.at_keyword("ASC", "DESC"):
                    direction = self.next().value
                order_by.append(OrderKey(expr, direction))
                if not self.accept_punct(","):
                    break
        limit: list[object] = []
        if self.accept_keyword("LIMIT"):
            limit.append(self.parse_expr())
            if self.accept_keyword("OFFSET") or self.accept_punct(","):
                limit.append(self.parse_expr())
        return Query(body, tuple(order_by), tuple(limit))

    def parse_select_core(self) -> SelectCore:
        self.expect_keyword("SELECT")
        distinct = False
        if self.accept_keyword("DISTINCT"):
            distinct = True
        else:
            self.accept_keyword("ALL")
        items = [self.parse_select_item()]
        while self.accept_punct(","):
            items.append(self.parse_select_item())
        sources: list[Source] = []
        where = None
        group_by: list[object] = []
        if self.accept_keyword("FROM"):
            sources = self.parse_sources()
        if self.accept_keyword("WHERE"):
            where = self.parse_expr()
        if self.accept_keyword("GROUP"):
            self.expect_keyword("BY")
            group_by.append(self.parse_expr())
            while self.accept_punct(","):
                group_by.append(self.parse_expr())
        having = None
        if self.accept_keyword("HAVING"):
            having = self.parse_expr()
        return SelectCore(distinct, tuple(items), tuple(sources), where,
                          tuple(group_by), having)

    def parse_select_item(self):
        expr = self.parse_expr()
        if self.accept_keyword("AS"):
            self.next()  # alias, discarded
        elif self.peek() is not None and self.peek().kind == "IDENT" \
                and not self.at_punct("("):
            # bare alias (rare in Spider, but legal)
            self.i += 1
        return expr

    def parse_sources(self) -> list[Source]:
        sources = [self.parse_one_source(joined=False)]
        while True:
            if self.accept_punct(","):
                sources.append(self.parse_one_source(joined=False))
            elif self.at_keyword(*JOIN_INTRO):
                while self.at_keyword(*JOIN_INTRO) and not self.at_keyword("JOIN"):
                    self.next()           # INNER/LEFT/OUTER/... qualifiers
                    self.accept_keyword("OUTER")
                self.expect_keyword("JOIN")
                src = self.parse_one_source(joined=True)
                sources.append(src)
            else:
                break
        return sources

    def parse_one_source(self, joined: bool) -> Source:
        on = None
        if self.accept_punct("("):
            sub = Subquery(self.parse_query())
            self.expect_punct(")")
            self._accept_alias()
            if joined and self.accept_keyword("ON"):
                on = self.parse_expr()
            return Source(None, sub, joined, on)
        tok = self.next()
        if tok.kind not in ("IDENT", "KEYWORD"):
            raise ParseError(f"expected table name at offset {tok.pos} in {self.sql!r}")
        name = tok.value
        self._accept_alias()
        if joined and self.accept_keyword("ON"):
            on = self.parse_expr()
        return Source(name, None, joined, on)

    def _accept_alias(self) -> None:
        if self.accept_keyword("AS"):
            self.next()
        elif self.peek() is not None and self.peek().kind == "IDENT":
            self.i += 1

    # -- expressions, lowest to highest precedence --

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while self.accept_keyword("OR"):
            left = Bin("OR", left, self.parse_and())
        return left

    def parse_and(self):
        left = self.parse_not()
        while self.accept_keyword("AND"):
            left = Bin("AND", left, self.parse_not())
        return left

    def parse_not(self):
        if self.accept_keyword("NOT"):
            return Unary("NOT", self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self):
        left = self.parse_additive()
        tok = self.peek()
        if tok is None:
            return left
        if tok.kind == "OP" and tok.value in ("=", "!=", "<", ">", "<=", ">="):
            self.next()
            return Bin(tok.value, left, self.parse_additive())
        negated = False
        if self.at_keyword("NOT"):
            follow = self.peek(1)
            if follow is not None and follow.kind == "KEYWORD" \
                    and follow.value in ("IN", "LIKE", "BETWEEN"):
                self.next()
                negated = True
        if self.accept_keyword("IN"):
            self.expect_punct("(")
            if self.at_keyword("SELECT"):
                sub = Subquery(self.parse_query())
                self.expect_punct(")")
                return InExpr(left, negated, (), sub)
            values = [self.parse_expr()]
            while self.accept_punct(","):
                values.append(self.parse_expr())
            self.expect_punct(")")
            return InExpr(left, negated, tuple(values), None)
        if self.accept_keyword("LIKE"):
            return LikeExpr(left, negated, self.parse_additive())
        if self.accept_keyword("BETWEEN"):
            low = self.parse_additive()
            self.expect_keyword("AND")
            high = self.parse_additive()
            return BetweenExpr(left, negated, low, high)
        if self.accept_keyword("IS"):
            neg = self.accept_keyword("NOT")
            rhs = Lit("NULL") if self.accept_keyword("NULL") else self.parse_additive()
            return IsExpr(left, neg, rhs)
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "OP" and tok.value in ("+", "-"):
                self.next()
                left = Bin(tok.value, left, self.parse_multiplicative())
            else:
                return left

    def parse_multiplicative(self):
        left = self.parse_unary()
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == "OP" and tok.value in ("*", "/", "%", "||"):
                self.next()
                left = Bin(tok.value, left, self.parse_unary())
            else:
                return left

    def parse_unary(self):
        tok = self.peek()
        if tok is not None and tok.kind == "OP" and tok.value in ("-", "+"):
            self.next()
            operand = self.parse_unary()
            if isinstance(operand, Lit):
                # signed literal, not an arithmetic operation
                return Lit(tok.value + operand.text) if tok.value == "-" else operand
            return operand if tok.value == "+" else Unary("-", operand)
        return self.parse_primary()

    def parse_primary(self):
        tok = self.peek()
        if tok is None:
            raise ParseError(f"unexpected end of expression in {self.sql!r}")
        if tok.kind == "NUMBER" or tok.kind == "STRING":
            self.next()
            return Lit(tok.value)
        if tok.kind == "OP" and tok.value == "*":
            self.next()
            return Lit("*")
        if tok.kind == "KEYWORD":
            if tok.value == "NULL":
                self.next()
                return Lit("NULL")
            if tok.value == "EXISTS":
                self.next()
                self.expect_punct("(")
                sub = Subquery(self.parse_query())
                self.expect_punct(")")
                return ExistsExpr(False, sub)
            if tok.value == "CASE":
                return self.parse_case()
            if tok.value in ("ALL",):
                # quantifier-ish keyword in value position: treat as identifier
                self.next()
                return Col(tok.value)
            raise ParseError(f"unexpected keyword {tok.value} at {self._where()}")
        if tok.kind == "PUNCT" and tok.value == "(":
            self.next()
            if self.at_keyword("SELECT"):
                sub = Subquery(self.parse_query())
                self.expect_punct(")")
                return sub
            inner = self.parse_expr()
            self.expect_punct(")")
            return inner
        if tok.kind == "IDENT":
            self.next()
            # function call
            if self.at_punct("("):
                self.next()
                distinct = self.accept_keyword("DISTINCT")
                args: list[object] = []
                if not self.at_punct(")"):
                    args.append(self.parse_expr())
                    if self.accept_keyword("AS"):  # CAST(expr AS type)
                        self.next()
                    while self.accept_punct(","):
                        args.append(self.parse_expr())
                self.expect_punct(")")
                return Func(tok.value.upper(), distinct, tuple(args))
            # dotted reference: t.col or t.*
            name = tok.value
            while self.accept_punct("."):
                nxt = self.next()
                if nxt.kind == "OP" and nxt.value == "*":
                    name += ".*"
                    break
                if nxt.kind not in ("IDENT", "KEYWORD"):
                    raise ParseError(f"bad column reference at offset {nxt.pos}")
                name += "." + nxt.value
            return Col(name)
        raise ParseError(f"unexpected token {tok.value!r} at {self._where()}")

    def parse_case(self) -> CaseExpr:
        self.expect_keyword("CASE")
        operand = None
        if not self.at_keyword("WHEN"):
            operand = self.parse_expr()
        whens: list[tuple] = []
        while self.accept_keyword("WHEN"):
            cond = self.parse_expr()
            self.expect_keyword("THEN")
            whens.append((cond, self.parse_expr()))
        default = None
        if self.accept_keyword("ELSE"):
            default = self.parse_expr()
        self.expect_keyword("END")
        return CaseExpr(operand, tuple(whens), default)


def parse_sql(sql: str) -> Query:
    """Parse one SELECT statement (an optional trailing semicolon is allowed)."""
    if not sql or not sql.strip():
        raise ParseError("empty SQL text")
    tokens = tokenize(sql)
    parser = _Parser(tokens, sql)
    query = parser.parse_query()
    parser.accept_punct(";")
    if parser.peek() is not None:
        raise ParseError(f"trailing tokens at {parser._where()}")
    return query
