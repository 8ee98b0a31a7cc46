import json
import pathlib

import pytest

from cpcaudit.config import af_toy, z5_full, z_folner

FIXTURES = pathlib.Path(__file__).with_name("fixtures")


@pytest.fixture(scope="session")
def pilot():
    return json.loads((FIXTURES / "pilot.json").read_text())


@pytest.fixture(scope="session")
def z32():
    return z_folner(32, verify=False)


@pytest.fixture(scope="session")
def z5():
    return z5_full(8)


@pytest.fixture(scope="session")
def af():
    return af_toy(6)


@pytest.fixture(scope="session")
def z64():
    return z_folner(64, verify=False)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
