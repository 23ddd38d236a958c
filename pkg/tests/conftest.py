import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tura.offline import BUILTIN_FIXTURE, load_fixture  # noqa: E402

BEIJING_QUERY = "Beijing trip June 10-15. Need hotel, 2-3 attractions and things to do."


@pytest.fixture(scope="session")
def fixture_dir() -> Path:
    return BUILTIN_FIXTURE


@pytest.fixture()
def beijing():
    return load_fixture()


@pytest.fixture()
def beijing_fast():
    return load_fixture(latency=False)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
