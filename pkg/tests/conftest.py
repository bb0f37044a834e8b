import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))
sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))

from crwl import FIXTURES  # noqa: E402
from crwl.parser import load_modules  # noqa: E402


@pytest.fixture(scope="session")
def mods():
    return load_modules([FIXTURES])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
