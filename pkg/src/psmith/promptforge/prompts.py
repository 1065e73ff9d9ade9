"""Prompt assembly for every pipeline mode.

All builders are pure functions of their inputs and the mode's template
file; identical inputs give byte-identical artifacts. Every artifact is
budget-checked at construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..corpus.types import AnnotatedExample, SchemaProfile
from ..errors import BudgetExceeded
from .budget import TokenBudget
from .schema_render import render_schema_basic, render_schema_domain
from .templates import Template, load_template


class Mode:
    GP = "gp"
    DA_GP = "da_gp"
    LTMP_GP_STAGE1 = "ltmp_gp_stage1"
    LTMP_GP_STAGE2 = "ltmp_gp_stage2"
    LTMP_GP_STAGE3 = "ltmp_gp_stage3"
    LTMP_DA_GP_STAGE1 = "ltmp_da_gp_stage1"
    LTMP_DA_GP_STAGE2 = "ltmp_da_gp_stage2"
    LTMP_DA_GP_STAGE3 = "ltmp_da_gp_stage3"
    ADAPT_SQL = "adapt_sql"
    ADAPT_NL = "adapt_nl"


@dataclass(frozen=True)
class PromptArtifact:
    mode: str
    text: str
    exemplar_ids: tuple[str, ...]
    token_count: int
    budget: int

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()


def _make_artifact(mode: str, text: str, exemplar_ids: Sequence[str],
                   budget: TokenBudget) -> PromptArtifact:
    count = budget.measure(text)
    if count > budget.limit:
        raise BudgetExceeded(
            f"{mode} prompt needs {count} tokens, budget is {budget.limit}")
    return PromptArtifact(mode, text, tuple(exemplar_ids), count, budget.limit)


def save_artifact(artifact: PromptArtifact, path: str | Path) -> None:
    """Persist as a one-line JSON metadata header followed by the raw text."""
    header = json.dumps({
        "mode": artifact.mode,
        "exemplar_ids": list(artifact.exemplar_ids),
        "token_count": artifact.token_count,
        "budget": artifact.budget,
        "sha256": artifact.digest,
    }, sort_keys=True)
    Path(path).write_text(header + "\n" + artifact.text, encoding="utf-8")


def load_artifact(path: str | Path) -> PromptArtifact:
    raw = Path(path).read_text(encoding="utf-8")
    header, _, text = raw.partition("\n")
    meta = json.loads(header)
    return PromptArtifact(meta["mode"], text, tuple(meta["exemplar_ids"]),
                          meta["token_count"], meta["budget"])


# --- shared assembly helpers ------------------------------------------------

def _exemplar_items(exemplars) -> list:
    return list(getattr(exemplars, "items", exemplars))


def _group_by_db(items) -> list[tuple[str, list]]:
    """Group exemplar-like records by db_id, preserving first-use order."""
    order: list[str] = []
    groups: dict[str, list] = {}
    for item in items:
        if item.db_id not in groups:
            order.append(item.db_id)
            groups[item.db_id] = []
        groups[item.db_id].append(item)
    return [(db_id, groups[db_id]) for db_id in order]


def _schema_for(databases, db_id: str) -> SchemaProfile:
    mapping = getattr(databases, "databases", databases)
    try:
        return mapping[db_id]
    except KeyError:
        raise KeyError(f"db_id {db_id!r} does not resolve to a schema") from None


def exemplar_id(item) -> str:
    content = hashlib.sha256(f"{item.nl}\n{item.sql}".encode("utf-8")).hexdigest()[:8]
    return f"{item.db_id}:{content}"


# --- Generic Prompt ---------------------------------------------------------

def build_generic_prompt(exemplars, databases, test: AnnotatedExample,
                         budget: TokenBudget | None = None,
                         test_schema: SchemaProfile | None = None) -> PromptArtifact:
    """Assemble the Generic Prompt: exemplar schemas and NL/SQL pairs grouped
    per database in first-use order, then the test schema, question and the
    trailing SELECT cue.

    ``databases`` must resolve every exemplar db_id (and the test db_id,
    unless ``test_schema`` is given explicitly).
    """
    budget = budget or TokenBudget()
    tpl = load_template("gp")
    items = _exemplar_items(exemplars)
    if test_schema is None:
        test_schema = _schema_for(databases, test.db_id)

    lines = [tpl["note"]]
    for db_id, group in _group_by_db(items):
        lines.append(tpl["schema_header"])
        lines.extend(render_schema_basic(_schema_for(databases, db_id)).splitlines())
        lines.append(tpl["separator"])
        for item in group:
            lines.append(tpl["question_prefix"] + item.nl)
            lines.append(item.sql)
            lines.append(tpl["separator"])
    lines.append(tpl["schema_header"])
    lines.extend(render_schema_basic(test_schema).splitlines())
    lines.append(tpl["separator"])
    lines.append(tpl["question_prefix"] + test.nl)
    lines.append(tpl["cue"])
    return _make_artifact(Mode.GP, "\n".join(lines),
                          [exemplar_id(i) for i in items], budget)


# --- Domain-Adapted Generic Prompt (final stage) ----------------------------

def build_da_prompt(target: SchemaProfile, pairs: Sequence[tuple[str, str]],
                    test_nl: str, budget: TokenBudget | None = None,
                    exemplar_ids: Sequence[str] = ()) -> PromptArtifact:
    """Assemble the domain-adapted prompt: the single target schema in the
    domain-enriched format, adapted NL/SQL pairs, then the test question."""
    budget = budget or TokenBudget()
    tpl = load_template("da_gp")
    lines = [tpl["schema_header"], tpl["separator"]]
    lines.extend(render_schema_domain(target).splitlines())
    lines.append(tpl["separator"])
    for nl, sql in pairs:
        lines.append(tpl["question_prefix"] + nl)
        lines.append(sql)
        lines.append(tpl["separator"])
    lines.append(tpl["question_prefix"] + test_nl)
    lines.append(tpl["cue"])
    return _make_artifact(Mode.DA_GP, "\n".join(lines), exemplar_ids, budget)


# --- Least-to-Most prompts ---------------------------------------------------

@dataclass(frozen=True)
class LtmpChain:
    """One few-shot reasoning chain: question, decomposition, intermediate
    representation steps, and the final SQL."""
    db_id: str
    nl: str
    sub_questions: tuple[str, ...]
    natsql_steps: tuple[str, ...]
    sql: str


def _render_list(items: Iterable[str], item_template: str) -> str:
    return ", ".join(item_template.replace("{text}", item) for item in items)


def _chain_lines(tpl: Template, chain: LtmpChain, cot_enabled: bool) -> list[str]:
    lines = [
        tpl["question_prefix"] + chain.nl,
        tpl["subquestions_prefix"] + "["
        + _render_list(chain.sub_questions, tpl["subquestion_item"]) + "]",
        tpl["steps_prefix"] + "["
        + _render_list(chain.natsql_steps, tpl["step_item"]) + "]",
        tpl["cot_line"] if cot_enabled else tpl["plain_answer_line"],
        tpl["sql_line"].replace("{sql}", chain.sql),
    ]
    return lines


LTMP_STAGES = (1, 2, 3)


def build_ltmp_prompt(family: str, stage: int, chains: Sequence[LtmpChain],
                      test_nl: str,
                      databases: Mapping[str, SchemaProfile] | None = None,
                      target: SchemaProfile | None = None,
                      test_sub_questions: Sequence[str] = (),
                      test_steps: Sequence[str] = (),
                      budget: TokenBudget | None = None,
                      cot_enabled: bool = True,
                      test_schema: SchemaProfile | None = None) -> PromptArtifact:
    """Assemble a least-to-most stage prompt.

    ``family`` is ``gp`` (multi-database exemplar schemas, basic format) or
    ``da`` (single target schema, domain format). Exemplar chains are shown
    in full at every stage; the test block grows recursively: stage 1 ends at
    the sub-question cue, stage 2 adds the generated sub-questions and ends
    at the intermediate-representation cue, stage 3 adds both and ends at the
    answer cue.
    """
    if family not in ("gp", "da"):
        raise ValueError(f"unknown LTMP family {family!r}")
    if stage not in LTMP_STAGES:
        raise ValueError(f"LTMP stage must be one of {LTMP_STAGES}")
    budget = budget or TokenBudget()
    tpl = load_template("ltmp_gp" if family == "gp" else "ltmp_da_gp")

    lines: list[str] = []
    if family == "gp":
        lines.append(tpl["note"])
        for db_id, group in _group_by_db(chains):
            if databases is None:
                raise ValueError("gp-family LTMP prompts need exemplar schemas")
            lines.append(tpl["schema_header"])
            lines.extend(render_schema_basic(_schema_for(databases, db_id)).splitlines())
            lines.append(tpl["separator"])
            for chain in group:
                lines.extend(_chain_lines(tpl, chain, cot_enabled))
                lines.append(tpl["separator"])
    else:
        if target is None:
            raise ValueError("da-family LTMP prompts need the target schema")
        lines.append(tpl["schema_header"])
        lines.append(tpl["separator"])
        lines.extend(render_schema_domain(target).splitlines())
        lines.append(tpl["separator"])
        for chain in chains:
            lines.extend(_chain_lines(tpl, chain, cot_enabled))
            lines.append(tpl["separator"])

    if family == "gp":
        if test_schema is None:
            raise ValueError("gp-family LTMP prompts need the test schema")
        lines.append(tpl["schema_header"])
        lines.extend(render_schema_basic(test_schema).splitlines())
        lines.append(tpl["separator"])
    lines.append(tpl["question_prefix"] + test_nl)

    if stage == 1:
        lines.append(tpl["subquestions_prefix"].rstrip())
    elif stage == 2:
        lines.append(tpl["subquestions_prefix"] + "["
                     + _render_list(test_sub_questions, tpl["subquestion_item"]) + "]")
        lines.append(tpl["steps_prefix"].rstrip())
    else:
        lines.append(tpl["subquestions_prefix"] + "["
                     + _render_list(test_sub_questions, tpl["subquestion_item"]) + "]")
        lines.append(tpl["steps_prefix"] + "["
                     + _render_list(test_steps, tpl["step_item"]) + "]")
        lines.append(tpl["stage3_cue"])

    if family == "gp":
        mode = (Mode.LTMP_GP_STAGE1, Mode.LTMP_GP_STAGE2, Mode.LTMP_GP_STAGE3)[stage - 1]
    else:
        mode = (Mode.LTMP_DA_GP_STAGE1, Mode.LTMP_DA_GP_STAGE2,
                Mode.LTMP_DA_GP_STAGE3)[stage - 1]
    return _make_artifact(mode, "\n".join(lines),
                          [exemplar_id(c) for c in chains], budget)


# --- adaptation prompts -------------------------------------------------------

def build_adapt_sql_prompt(source_schema: SchemaProfile, source_sql: str,
                           target_schema: SchemaProfile,
                           budget: TokenBudget | None = None) -> PromptArtifact:
    """Stage-1 transfer prompt: source schema and SQL (no NL), target schema,
    and an instruction explaining compositional similarity."""
    budget = budget or TokenBudget()
    tpl = load_template("adapt_sql")
    lines = [tpl["instruction"], tpl["separator"]]
    lines.append(tpl["source_header"])
    lines.extend(render_schema_basic(source_schema).splitlines())
    lines.append(tpl["separator"])
    lines.append(tpl["source_sql_header"])
    lines.append(source_sql)
    lines.append(tpl["separator"])
    lines.append(tpl["target_header"])
    lines.extend(render_schema_basic(target_schema).splitlines())
    lines.append(tpl["separator"])
    lines.append(tpl["task_line"])
    lines.append(tpl["cue"])
    return _make_artifact(Mode.ADAPT_SQL, "\n".join(lines), (), budget)


def build_adapt_nl_prompt(target_schema: SchemaProfile, adapted_sql: str,
                          budget: TokenBudget | None = None) -> PromptArtifact:
    """Stage-2 prompt: target schema plus an adapted SQL, asking for the NL
    question the SQL answers."""
    budget = budget or TokenBudget()
    tpl = load_template("adapt_nl")
    lines = [tpl["instruction"], tpl["separator"]]
    lines.append(tpl["target_header"])
    lines.extend(render_schema_basic(target_schema).splitlines())
    lines.append(tpl["separator"])
    lines.append(tpl["sql_header"])
    lines.append(adapted_sql)
    lines.append(tpl["separator"])
    lines.append(tpl["task_line"])
    lines.append(tpl["cue"])
    return _make_artifact(Mode.ADAPT_NL, "\n".join(lines), (), budget)
