import pathlib

import pytest

from nerkit.tagformat import TagMap

DATA_DIR = pathlib.Path(__file__).resolve().parent.parent / "src" / "nerkit" / "data"
FIXTURE_DIR = pathlib.Path(__file__).resolve().parent / "fixtures"


@pytest.fixture(scope="session")
def fine_tagmap():
    return TagMap.from_file(DATA_DIR / "tagmap_fine.cfg")


@pytest.fixture(scope="session")
def combined_tagmap():
    return TagMap.from_file(DATA_DIR / "tagmap_combined.cfg")


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


@pytest.fixture(scope="session")
def fixture_dir():
    return FIXTURE_DIR
