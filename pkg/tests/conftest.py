import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from svdc.schedule import build_ddim_grid, build_schedule

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def cosine():
    return build_schedule("cosine", 1000)


@pytest.fixture(scope="session")
def grid50(cosine):
    return build_ddim_grid(50, cosine)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Report one acceptance criterion as a single PASS/FAIL line, then assert it."""

    def report(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert passed, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
