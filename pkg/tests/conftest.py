from pathlib import Path

import pytest

from tenantguard.manifest import load_scenario

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def default_scenario():
    return load_scenario(FIXTURES / "default")


@pytest.fixture(scope="session")
def secure_scenario():
    return load_scenario(FIXTURES / "secure")
