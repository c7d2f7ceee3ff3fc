from pathlib import Path

import pytest

from medialens.geoparse import load_gazetteer
from medialens.registry import load_registry

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def gazetteer():
    return load_gazetteer(FIXTURES / "gazetteer.csv", FIXTURES / "aliases.csv")


@pytest.fixture(scope="session")
def registry():
    return load_registry(FIXTURES / "registry_desk.json")


@pytest.fixture(scope="session")
def tweet_lines():
    return (FIXTURES / "tweets_12.ndjson").read_text(encoding="utf-8").splitlines()
