from __future__ import annotations

import json

import pytest

import fixturelib
from psmith.corpus import (
    NumericRange,
    SampledValues,
    ensure_disjoint,
    load_kaggledbqa,
    load_spider,
    load_spider_ss,
    profile_schema,
)
from psmith.corpus.types import DecompositionRecord
from psmith.errors import LengthMismatch, MalformedManifest, MissingFile, NotADatabase


def test_load_spider_counts(train_dataset):
    assert len(train_dataset.databases) == 5
    assert len(train_dataset.examples) == len(fixturelib.TRAIN_EXAMPLES)
    assert train_dataset.role == "train"


def test_load_spider_schema_structure(train_dataset):
    college = train_dataset.databases["college_2"]
    assert [t.name for t in college.tables][:3] == ["classroom", "department", "course"]
    assert college.primary_keys["classroom"] == ("building", "room_number")
    composite = [fk for fk in college.foreign_keys if fk.from_table == "teaches"
                 and fk.to_table == "section"]
    assert composite and composite[0].from_columns == ("course_id", "sec_id", "semester", "year")
    assert college.sqlite_path is not None and college.sqlite_path.exists()


def test_load_spider_missing_dir(tmp_path):
    with pytest.raises(MissingFile):
        load_spider(tmp_path)


def test_load_spider_empty_manifest_ok(tmp_path):
    (tmp_path / "tables.json").write_text(json.dumps(fixturelib.TRAIN_TABLES))
    (tmp_path / "train_spider.json").write_text("[]")
    dataset = load_spider(tmp_path)
    assert dataset.examples == []


def test_load_spider_unknown_db_id(tmp_path):
    (tmp_path / "tables.json").write_text(json.dumps(fixturelib.TRAIN_TABLES))
    (tmp_path / "train_spider.json").write_text(json.dumps([
        {"db_id": "nonexistent", "question": "q", "query": "SELECT 1"}]))
    with pytest.raises(MalformedManifest) as excinfo:
        load_spider(tmp_path)
    assert excinfo.value.row == 0


def test_load_kaggledbqa_counts(test_dataset):
    assert len(test_dataset.databases) == 8
    assert test_dataset.role == "test"
    per_db = {db: len(test_dataset.examples_for(db)) for db in test_dataset.databases}
    assert per_db[fixturelib.NUCLEAR_DB] == 22
    assert per_db["WorldSoccerDataBase"] == 12
    expected = {db["db_id"]: db["count"] for db in fixturelib.TEST_DATABASES}
    assert per_db == expected


def test_load_kaggledbqa_descriptions(test_dataset):
    nuclear = test_dataset.databases[fixturelib.NUCLEAR_DB]
    by_name = {c.name: c for c in nuclear.table(fixturelib.NUCLEAR_TABLE).columns}
    assert by_name["Capacity"].description == \
        "nuclear power plant capacity (design net capacity in MWe)"
    assert by_name["Name"].description is None


def test_load_kaggledbqa_single_db(tmp_path, kaggledbqa_dir):
    root = tmp_path / "single"
    (root / "examples").mkdir(parents=True)
    manifest = json.loads((kaggledbqa_dir / "tables.json").read_text())
    (root / "tables.json").write_text(json.dumps(manifest[:1]))
    source = kaggledbqa_dir / "examples" / f"{fixturelib.NUCLEAR_DB}.json"
    (root / "examples" / source.name).write_text(source.read_text())
    dataset = load_kaggledbqa(root)
    assert list(dataset.databases) == [fixturelib.NUCLEAR_DB]
    assert dataset.role == "test"


def test_train_test_disjoint(train_dataset, test_dataset):
    ensure_disjoint(train_dataset, test_dataset)
    with pytest.raises(ValueError):
        ensure_disjoint(train_dataset, train_dataset)


def test_load_spider_ss(spider_ss_dir):
    records = load_spider_ss(spider_ss_dir)
    record = records["Find the buildings which have rooms with capacity more than 50."]
    assert record.sub_questions == ("Find the buildings",
                                    "which have rooms with capacity more than 50.")
    assert record.natsql_steps == ("select distinct classroom.building",
                                   "select where classroom.capacity > 50")


def test_decomposition_record_arity():
    DecompositionRecord("q", ("a",), ("s",), "SELECT 1")  # fine
    with pytest.raises(LengthMismatch):
        DecompositionRecord("q", ("a", "b"), ("s",), "SELECT 1")
    with pytest.raises(LengthMismatch):
        DecompositionRecord("q", (), (), "SELECT 1")


def test_round_trip_determinism(spider_dir):
    first = load_spider(spider_dir)
    second = load_spider(spider_dir)
    assert [t for d in first.databases.values() for t in d.tables] == \
        [t for d in second.databases.values() for t in d.tables]
    assert first.examples == second.examples


# --- schema profiling -----------------------------------------------------------

def nuclear_path(kaggledbqa_dir):
    return (kaggledbqa_dir / "databases" / fixturelib.NUCLEAR_DB
            / f"{fixturelib.NUCLEAR_DB}.sqlite")


def test_profile_deterministic(kaggledbqa_dir):
    path = nuclear_path(kaggledbqa_dir)
    assert profile_schema(path, 7).value_profile == profile_schema(path, 7).value_profile


def test_profile_numeric_range(kaggledbqa_dir):
    profile = profile_schema(nuclear_path(kaggledbqa_dir), 0)
    capacity = profile.value_profile[(fixturelib.NUCLEAR_TABLE, "Capacity")]
    assert isinstance(capacity, NumericRange)
    assert capacity.low == "10" and capacity.high == "1360"


def test_profile_numeric_samples_mode(kaggledbqa_dir):
    profile = profile_schema(nuclear_path(kaggledbqa_dir), 0, numeric_render="samples")
    capacity = profile.value_profile[(fixturelib.NUCLEAR_TABLE, "Capacity")]
    assert isinstance(capacity, SampledValues)
    assert len(capacity.values) == 4


def test_profile_datetime_and_categorical_sampled(kaggledbqa_dir):
    profile = profile_schema(nuclear_path(kaggledbqa_dir), 0)
    start = profile.value_profile[(fixturelib.NUCLEAR_TABLE, "ConstructionStartAt")]
    assert isinstance(start, SampledValues)
    country = profile.value_profile[(fixturelib.NUCLEAR_TABLE, "Country")]
    assert isinstance(country, SampledValues)
    assert len(country.values) == 4  # more than four distinct countries exist


def test_profile_small_population(tmp_path):
    import sqlite3

    path = tmp_path / "tiny.sqlite"
    conn = sqlite3.connect(path)
    conn.executescript(
        "CREATE TABLE t (c TEXT, empty_col TEXT);"
        "INSERT INTO t VALUES ('x', NULL), ('y', NULL), ('x', NULL);")
    conn.close()
    profile = profile_schema(path, 3)
    assert profile.value_profile[("t", "c")] == SampledValues(("x", "y"))
    assert ("t", "empty_col") not in profile.value_profile


def test_profile_excludes_nulls(tmp_path):
    import sqlite3

    path = tmp_path / "nullable.sqlite"
    conn = sqlite3.connect(path)
    conn.executescript(
        "CREATE TABLE t (n INTEGER); INSERT INTO t VALUES (1), (NULL), (5);")
    conn.close()
    profile = profile_schema(path, 0)
    assert profile.value_profile[("t", "n")] == NumericRange("1", "5")


def test_profile_not_a_database(tmp_path):
    bogus = tmp_path / "not.sqlite"
    bogus.write_text("this is not a database")
    with pytest.raises(NotADatabase):
        profile_schema(bogus, 0)
    with pytest.raises(NotADatabase):
        profile_schema(tmp_path / "missing.sqlite", 0)


def test_profile_reads_keys(spider_dir):
    path = spider_dir / "database" / "college_2" / "college_2.sqlite"
    profile = profile_schema(path, 0)
    assert profile.primary_keys["classroom"] == ("building", "room_number")
    teaches_fk = [fk for fk in profile.foreign_keys
                  if fk.from_table == "teaches" and fk.to_table == "section"]
    assert teaches_fk and len(teaches_fk[0].from_columns) == 4
