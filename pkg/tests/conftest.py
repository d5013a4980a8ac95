import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from grovermean.cli import fixture_path  # noqa: E402
from grovermean.prob import load_dist  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def fixtures():
    names = ("uni_a", "uni_b", "uni_c", "bench_2d", "bench_2d_small", "gauss_3d")
    return {name: load_dist(fixture_path(name)) for name in names}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
