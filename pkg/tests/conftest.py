"""Shared fixtures: the default registry, fixture paths, and farm plumbing."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mailtls.registry import default_probe_plan, default_registry  # noqa: E402

TESTS_DIR = Path(__file__).resolve().parent
DATA_DIR = TESTS_DIR / "data"


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def probe_plan(registry):
    return default_probe_plan(registry)


@pytest.fixture(scope="session")
def cert_manifest():
    return json.loads((DATA_DIR / "certs" / "manifest.json").read_text())


@pytest.fixture(scope="session")
def truststore_path():
    return str(DATA_DIR / "certs" / "truststore.pem")


@pytest.fixture(scope="session")
def openssl_flights():
    return json.loads((DATA_DIR / "wire" / "openssl_flights.json").read_text())


@pytest.fixture
def farm_factory():
    """Yields spawn_farm wrapped so every farm is torn down after the test."""
    from mailtls.testbed import spawn_farm

    farms = []

    def spawn(policies, **kwargs):
        farm = spawn_farm(policies, **kwargs)
        farms.append(farm)
        return farm

    yield spawn
    for farm in farms:
        farm.close()
