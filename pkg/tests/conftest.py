import pytest

from htsk.calibration import load_calibration
from htsk.streams import RandomStream


@pytest.fixture(scope="session")
def calibration():
    return load_calibration()


@pytest.fixture()
def stream():
    return RandomStream.from_seed(0xC0FFEE)


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in rep.nodeid and rep.when == "call":
                rows.append((rep.nodeid.split("::")[-1], outcome.upper()))
    if rows:
        terminalreporter.write_sep("=", "acceptance criteria")
        for name, outcome in sorted(rows):
            terminalreporter.write_line(f"{name}: {outcome}")
