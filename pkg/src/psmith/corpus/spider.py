"""Loaders for Spider-format and Spider-SS-format directories.

Expected Spider layout::

    <root>/tables.json            schema manifest (db_id, table/column names,
                                  column types, primary keys, foreign keys;
                                  composite foreign keys may be grouped as
                                  [[from indices], [to indices]])
    <root>/train_spider.json      examples manifest [{db_id, question, query}]
                                  (train.json and examples.json also accepted)
    <root>/database/<db>/<db>.sqlite

Spider-SS layout: ``<root>/spider_ss.json`` with rows carrying the same
question plus parallel ``sub_questions`` and ``natsql_steps`` lists.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

from ..errors import LengthMismatch, MalformedManifest, MissingFile
from .types import (
    AnnotatedDataset,
    AnnotatedExample,
    Column,
    DecompositionRecord,
    ForeignKey,
    Role,
    SchemaProfile,
    Table,
)

logger = logging.getLogger(__name__)

EXAMPLE_MANIFESTS = ("train_spider.json", "train.json", "examples.json")


def _read_json(path: Path):
    if not path.exists():
        raise MissingFile(str(path))
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _schema_from_manifest(entry: dict, row: int,
                          descriptions: list[str | None] | None = None) -> SchemaProfile:
    try:
        db_id = entry["db_id"]
        table_names = entry["table_names_original"]
        column_entries = entry["column_names_original"]
        column_types = entry.get("column_types", [])
        pk_indices = entry.get("primary_keys", [])
        fk_pairs = entry.get("foreign_keys", [])
    except (KeyError, TypeError) as exc:
        raise MalformedManifest(f"schema entry missing field: {exc}", row=row) from None

    per_table: list[list[Column]] = [[] for _ in table_names]
    col_owner: list[tuple[int, str]] = []  # column index -> (table idx, name)
    for i, (tidx, col_name) in enumerate(column_entries):
        col_owner.append((tidx, col_name))
        if tidx == -1:  # the '*' pseudo-column
            continue
        if not 0 <= tidx < len(table_names):
            raise MalformedManifest(f"{db_id}: column {col_name!r} names table index {tidx}", row=row)
        ctype = column_types[i] if i < len(column_types) else ""
        desc = descriptions[i] if descriptions and i < len(descriptions) else None
        per_table[tidx].append(Column(col_name, ctype, desc))

    tables = tuple(Table(name, tuple(cols)) for name, cols in zip(table_names, per_table))

    primary_keys: dict[str, list[str]] = {}
    for idx in pk_indices:
        tidx, col_name = col_owner[idx]
        primary_keys.setdefault(table_names[tidx], []).append(col_name)

    foreign_keys = []
    for from_spec, to_spec in fk_pairs:
        # single-column pairs are [int, int]; composite keys may be grouped
        # as [[int, ...], [int, ...]]
        from_idxs = from_spec if isinstance(from_spec, list) else [from_spec]
        to_idxs = to_spec if isinstance(to_spec, list) else [to_spec]
        if len(from_idxs) != len(to_idxs):
            raise MalformedManifest(f"{db_id}: unbalanced foreign key {from_spec} -> {to_spec}", row=row)
        ftidx = col_owner[from_idxs[0]][0]
        ttidx = col_owner[to_idxs[0]][0]
        foreign_keys.append(ForeignKey(
            table_names[ftidx],
            tuple(col_owner[i][1] for i in from_idxs),
            table_names[ttidx],
            tuple(col_owner[i][1] for i in to_idxs),
        ))

    try:
        return SchemaProfile(
            db_id=db_id,
            tables=tables,
            primary_keys={t: tuple(cols) for t, cols in primary_keys.items()},
            foreign_keys=tuple(foreign_keys),
        )
    except ValueError as exc:
        raise MalformedManifest(str(exc), row=row) from None


def load_tables_manifest(path: Path, descriptions_key: str | None = None) -> dict[str, SchemaProfile]:
    entries = _read_json(path)
    schemas: dict[str, SchemaProfile] = {}
    for row, entry in enumerate(entries):
        descriptions = entry.get(descriptions_key) if descriptions_key else None
        profile = _schema_from_manifest(entry, row, descriptions)
        schemas[profile.db_id] = profile
    return schemas


def _attach_sqlite_paths(schemas: dict[str, SchemaProfile], root: Path,
                         db_dir_names: tuple[str, ...]) -> None:
    for db_id, profile in schemas.items():
        for dirname in db_dir_names:
            candidate = root / dirname / db_id / f"{db_id}.sqlite"
            if candidate.exists():
                profile.sqlite_path = candidate
                break
        else:
            logger.warning("no SQLite file found for database %s under %s", db_id, root)


def load_spider(directory: str | Path, role: str = Role.TRAIN) -> AnnotatedDataset:
    """Load a Spider-format directory.

    Answers are not materialized here; the evaluator executes gold SQL on
    demand. Raises MissingFile / MalformedManifest (with the row index).
    """
    root = Path(directory)
    schemas = load_tables_manifest(root / "tables.json")
    _attach_sqlite_paths(schemas, root, ("database",))

    manifest = None
    for name in EXAMPLE_MANIFESTS:
        if (root / name).exists():
            manifest = root / name
            break
    if manifest is None:
        raise MissingFile(f"no examples manifest in {root} (tried {', '.join(EXAMPLE_MANIFESTS)})")

    examples = []
    for row, entry in enumerate(_read_json(manifest)):
        try:
            db_id, nl, sql = entry["db_id"], entry["question"], entry["query"]
        except (KeyError, TypeError) as exc:
            raise MalformedManifest(f"example missing field: {exc}", row=row) from None
        if db_id not in schemas:
            raise MalformedManifest(f"example references unknown db_id {db_id!r}", row=row)
        if not str(sql).strip():
            raise MalformedManifest("empty gold SQL", row=row)
        examples.append(AnnotatedExample(db_id, nl, sql))
    return AnnotatedDataset(databases=schemas, examples=examples, role=role)


def load_spider_ss(directory: str | Path) -> dict[str, DecompositionRecord]:
    """Load Spider-SS decompositions keyed by the exact NL question text."""
    root = Path(directory)
    path = root / "spider_ss.json"
    records: dict[str, DecompositionRecord] = {}
    for row, entry in enumerate(_read_json(path)):
        try:
            nl = entry["question"]
            subs = tuple(entry["sub_questions"])
            steps = tuple(entry["natsql_steps"])
            gold = entry["query"]
        except (KeyError, TypeError) as exc:
            raise MalformedManifest(f"spider-ss entry missing field: {exc}", row=row) from None
        try:
            records[nl] = DecompositionRecord(nl, subs, steps, gold)
        except LengthMismatch:
            raise
    return records
