"""Tokenizer for the SQLite SELECT-statement subset used by Spider-style corpora."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError

# Words with grammatical meaning in the SELECT grammar. Anything else is an
# identifier, so column names like YEAR or tables like SECTION still parse.
KEYWORDS = frozenset({
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY", "HAVING", "LIMIT",
    "OFFSET", "JOIN", "INNER", "LEFT", "RIGHT", "FULL", "OUTER", "CROSS",
    "NATURAL", "ON", "AS", "AND", "OR", "NOT", "IN", "LIKE", "BETWEEN", "IS",
    "NULL", "DISTINCT", "ALL", "UNION", "INTERSECT", "EXCEPT", "CASE", "WHEN",
    "THEN", "ELSE", "END", "EXISTS", "ASC", "DESC",
})

_TOKEN_RE = re.compile(
    r"""
    (?P<space>\s+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<qident>"[^"]*"|`[^`]*`|\[[^\]]*\])
  | (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+|\d+(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><>|!=|<=|>=|\|\||[=<>+\-*/%])
  | (?P<punct>[(),.;])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str       # KEYWORD | IDENT | STRING | NUMBER | OP | PUNCT
    value: str      # keywords and ops are upper-cased/canonical
    pos: int        # character offset, for error messages


def tokenize(sql: str) -> list[Token]:
    """Split SQL text into tokens.

    Raises ParseError on characters outside the supported lexicon (the caller
    decides whether that skips the row or aborts).
    """
    tokens: list[Token] = []
    i = 0
    n = len(sql)
    while i < n:
        m = _TOKEN_RE.match(sql, i)
        if m is None:
            raise ParseError(f"unexpected character {sql[i]!r} at offset {i}")
        i = m.end()
        if m.lastgroup == "space":
            continue
        text = m.group()
        if m.lastgroup == "string":
            tokens.append(Token("STRING", text, m.start()))
        elif m.lastgroup == "qident":
            tokens.append(Token("IDENT", text[1:-1], m.start()))
        elif m.lastgroup == "number":
            tokens.append(Token("NUMBER", text, m.start()))
        elif m.lastgroup == "word":
            upper = text.upper()
            if upper in KEYWORDS:
                tokens.append(Token("KEYWORD", upper, m.start()))
            else:
                tokens.append(Token("IDENT", text, m.start()))
        elif m.lastgroup == "op":
            canonical = "!=" if text == "<>" else text
            tokens.append(Token("OP", canonical, m.start()))
        else:
            tokens.append(Token("PUNCT", text, m.start()))
    return tokens
