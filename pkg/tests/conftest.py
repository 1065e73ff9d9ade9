from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import fixturelib  # noqa: E402

GOLDEN_DIR = Path(__file__).parent / "data" / "golden"
REPLAY_DIR = Path(__file__).parent / "data" / "replay"


@pytest.fixture(scope="session")
def spider_dir(tmp_path_factory) -> Path:
    return fixturelib.build_spider_dir(tmp_path_factory.mktemp("spider"))


@pytest.fixture(scope="session")
def spider_ss_dir(tmp_path_factory) -> Path:
    return fixturelib.build_spider_ss_dir(tmp_path_factory.mktemp("spider_ss"))


@pytest.fixture(scope="session")
def kaggledbqa_dir(tmp_path_factory) -> Path:
    return fixturelib.build_kaggledbqa_dir(tmp_path_factory.mktemp("kaggledbqa"))


@pytest.fixture(scope="session")
def train_dataset(spider_dir):
    from psmith.corpus import load_spider

    return load_spider(spider_dir)


@pytest.fixture(scope="session")
def test_dataset(kaggledbqa_dir):
    from psmith.corpus import load_kaggledbqa

    return load_kaggledbqa(kaggledbqa_dir)


@pytest.fixture()
def golden():
    def read(name: str) -> str:
        return (GOLDEN_DIR / name).read_text(encoding="utf-8")
    return read
