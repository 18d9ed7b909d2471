import pathlib
from importlib import resources

import pytest

# The shared fixture corpus lives with the core package's test suite.
SHARED_FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"


@pytest.fixture(scope="session")
def shared_fixtures():
    assert SHARED_FIXTURES.is_dir(), "core fixture suite not found"
    return SHARED_FIXTURES


@pytest.fixture(scope="session")
def fine_tagmap_path():
    return str(resources.files("nerkit") / "data" / "tagmap_fine.cfg")


@pytest.fixture(scope="session")
def combined_tagmap_path():
    return str(resources.files("nerkit") / "data" / "tagmap_combined.cfg")
