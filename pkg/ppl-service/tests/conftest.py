import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from ppl_service import create_app, load_default

FIXTURES_PATH = Path(__file__).parent / "fixtures.json"


@pytest.fixture(scope="session")
def model():
    return load_default()


@pytest.fixture(scope="session")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="session")
def broken_client():
    # points at a path that cannot exist, so the model never loads
    return TestClient(create_app("/nonexistent/no-such-model.json"))


@pytest.fixture(scope="session")
def fixtures():
    return json.loads(FIXTURES_PATH.read_text())
