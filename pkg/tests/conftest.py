import warnings

import pytest
from hypothesis import settings

settings.register_profile("suite", max_examples=25, deadline=None)
settings.load_profile("suite")

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, title, passed, detail)."""
    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  [{number:2d}] {title}: {detail}"
        _CRITERIA.append((number, line))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
