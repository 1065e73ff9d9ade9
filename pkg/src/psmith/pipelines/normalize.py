"""Post-processing of raw LLM completions into SQL text."""

from __future__ import annotations

import re

from ..errors import NoSelectFound

_FENCE_RE = re.compile(r"```[a-zA-Z]*")
_SELECT_RE = re.compile(r"\bSELECT\b", re.IGNORECASE)
_QUOTED_RE = re.compile(r"'([^']*)'")


def normalize_sql(raw: str, cue: str | None = None) -> str:
    """Normalize a completion into one SQL statement.

    Strips code fences and prose before the first SELECT, prepends the cue
    when the prompt ended with one and the completion carries no SELECT of
    its own, collapses whitespace runs, tightens space inside single-quoted
    literals, and leaves at most one trailing semicolon. Idempotent.

    Raises NoSelectFound when neither the completion nor the cue provides
    a SELECT.
    """
    text = _FENCE_RE.sub(" ", raw)
    if cue is not None:
        # the completion continues the cue; SELECTs further in are subquery
        # or compound arms, so only a leading SELECT counts as a restart
        if not _SELECT_RE.match(text.lstrip()):
            text = cue + " " + text
    else:
        match = _SELECT_RE.search(text)
        if match:
            text = text[match.start():]
        else:
            raise NoSelectFound(f"no SELECT in completion: {raw[:120]!r}")

    text = re.sub(r"\s+", " ", text).strip()
    text = _QUOTED_RE.sub(lambda m: "'" + m.group(1).strip() + "'", text)

    stripped = text.rstrip("; ").rstrip()
    if text.endswith(";") or text.rstrip().endswith(";"):
        return stripped + ";"
    return stripped


def normalize_question(raw: str) -> str:
    """Clean a generated NL question: drop markup, quotes and label echoes."""
    text = _FENCE_RE.sub(" ", raw)
    text = re.sub(r"\s+", " ", text).strip()
    text = re.sub(r"^(Question|Q)\s*:\s*", "", text, flags=re.IGNORECASE)
    if len(text) >= 2 and text[0] in "\"'" and text[-1] == text[0]:
        text = text[1:-1].strip()
    return text
