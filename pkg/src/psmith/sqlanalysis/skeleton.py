"""Query skeletons: SQL ASTs with identifiers and literals anonymized.

A skeleton is an ordered labeled tree. Labels are clause keywords
(spelled without spaces, e.g. GROUPBY), operator tokens, function names,
and the placeholder ``_``. Two queries that differ only in identifiers
and literal values produce identical skeletons.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import parser as ast
from .parser import parse_sql

PLACEHOLDER = "_"


@dataclass(frozen=True)
class SkeletonNode:
    label: str
    children: tuple["SkeletonNode", ...] = ()

    def render(self) -> str:
        if not self.children:
            return self.label
        return f"{self.label}({' '.join(c.render() for c in self.children)})"

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


@dataclass(frozen=True)
class SqlSkeleton:
    root: SkeletonNode

    def render(self) -> str:
        """Human-readable rendering; the QUERY root wrapper is implicit."""
        if self.root.label == "QUERY":
            return " ".join(c.render() for c in self.root.children)
        return self.root.render()

    def size(self) -> int:
        return self.root.size()


def _leaf(label: str = PLACEHOLDER) -> SkeletonNode:
    return SkeletonNode(label)


def _node(label: str, children: list[SkeletonNode]) -> SkeletonNode:
    return SkeletonNode(label, tuple(children))


def _expr(e) -> SkeletonNode:
    if e is None:
        return _leaf()
    if isinstance(e, (ast.Lit, ast.Col)):
        return _leaf()
    if isinstance(e, ast.Bin):
        return _node(e.op, [_expr(e.left), _expr(e.right)])
    if isinstance(e, ast.Unary):
        return _node(e.op, [_expr(e.operand)])
    if isinstance(e, ast.Func):
        kids = [_leaf("DISTINCT")] if e.distinct else []
        kids += [_expr(a) for a in e.args] or [_leaf()]
        return _node(e.name, kids)
    if isinstance(e, ast.InExpr):
        kids = [_expr(e.lhs)]
        kids += [_expr(v) for v in e.values]
        if e.subquery is not None:
            kids.append(_subquery(e.subquery))
        node = _node("IN", kids)
        return _node("NOT", [node]) if e.negated else node
    if isinstance(e, ast.LikeExpr):
        node = _node("LIKE", [_expr(e.lhs), _expr(e.pattern)])
        return _node("NOT", [node]) if e.negated else node
    if isinstance(e, ast.BetweenExpr):
        node = _node("BETWEEN", [_expr(e.lhs), _expr(e.low), _expr(e.high)])
        return _node("NOT", [node]) if e.negated else node
    if isinstance(e, ast.IsExpr):
        node = _node("IS", [_expr(e.lhs), _expr(e.rhs)])
        return _node("NOT", [node]) if e.negated else node
    if isinstance(e, ast.ExistsExpr):
        node = _node("EXISTS", [_subquery(e.subquery)])
        return _node("NOT", [node]) if e.negated else node
    if isinstance(e, ast.Subquery):
        return _subquery(e)
    if isinstance(e, ast.CaseExpr):
        kids = []
        if e.operand is not None:
            kids.append(_expr(e.operand))
        for cond, result in e.whens:
            kids += [_expr(cond), _expr(result)]
        if e.default is not None:
            kids.append(_expr(e.default))
        return _node("CASE", kids)
    raise TypeError(f"unhandled AST node {type(e).__name__}")  # pragma: no cover


def _subquery(sub: ast.Subquery) -> SkeletonNode:
    return _node("SUBQUERY", _query_children(sub.query))


def _core_children(core: ast.SelectCore) -> list[SkeletonNode]:
    children: list[SkeletonNode] = []
    select_kids = [_leaf("DISTINCT")] if core.distinct else []
    select_kids += [_expr(item) for item in core.items]
    children.append(_node("SELECT", select_kids))
    if core.sources:
        from_kids: list[SkeletonNode] = []
        for src in core.sources:
            src_node = _subquery(src.subquery) if src.subquery is not None else _leaf()
            if src.joined:
                join_kids = [src_node]
                if src.on is not None:
                    join_kids.append(_expr(src.on))
                from_kids.append(_node("JOIN", join_kids))
            else:
                from_kids.append(src_node)
        children.append(_node("FROM", from_kids))
    if core.where is not None:
        children.append(_node("WHERE", [_expr(core.where)]))
    if core.group_by:
        children.append(_node("GROUPBY", [_expr(e) for e in core.group_by]))
    if core.having is not None:
        children.append(_node("HAVING", [_expr(core.having)]))
    return children


def _body_node(body) -> SkeletonNode:
    if isinstance(body, ast.Compound):
        left = _body_node(body.left) if isinstance(body.left, ast.Compound) \
            else _node("QUERY", _core_children(body.left))
        right = _node("QUERY", _core_children(body.right))
        return _node(body.op, [left, right])
    return _node("QUERY", _core_children(body))


def _query_children(q: ast.Query) -> list[SkeletonNode]:
    if isinstance(q.body, ast.Compound):
        children = [_body_node(q.body)]
    else:
        children = _core_children(q.body)
    if q.order_by:
        order_kids: list[SkeletonNode] = []
        for key in q.order_by:
            order_kids.append(_expr(key.expr))
            if key.direction is not None:
                order_kids.append(_leaf(key.direction))
        children.append(_node("ORDERBY", order_kids))
    if q.limit:
        children.append(_node("LIMIT", [_expr(e) for e in q.limit]))
    return children


def skeletonize(sql: str) -> SqlSkeleton:
    """Abstract *sql* to its skeleton.

    Identifiers and literals become ``_``; aggregation and other functions
    stay as labeled nodes; clauses follow the canonical
    SELECT-FROM-WHERE-GROUP BY-HAVING-ORDER BY-LIMIT spine.
    Raises ParseError for SQL outside the supported grammar.
    """
    query = parse_sql(sql)
    return SqlSkeleton(_node("QUERY", _query_children(query)))
