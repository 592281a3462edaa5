from __future__ import annotations

import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from cellopt.io import read_instance

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "fixtures")
sys.path.insert(0, HERE)

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, f"{name}.json")


@pytest.fixture(scope="session")
def load_fixture():
    cache = {}

    def load(name: str):
        if name not in cache:
            cache[name] = read_instance(fixture_path(name))
        return cache[name]

    return load


@pytest.fixture(scope="session")
def example_cell(load_fixture):
    return load_fixture("example_cell")


@pytest.fixture(scope="session")
def tiny(load_fixture):
    return load_fixture("tiny")


@pytest.fixture(scope="session")
def small(load_fixture):
    return load_fixture("small")


@pytest.fixture(scope="session")
def medium(load_fixture):
    return load_fixture("medium")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
