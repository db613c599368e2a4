import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SAMPLES = Path(__file__).resolve().parents[1] / "src" / "exactlen" / "data" / "samples"

_acceptance: dict[str, tuple[str, str]] = {}


@pytest.fixture
def samples():
    return SAMPLES


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for name, value in report.user_properties:
        if name == "acceptance":
            if report.outcome == "skipped":
                _acceptance[value] = ("SKIP", report.nodeid)
            else:
                _acceptance[value] = ("PASS" if report.passed else "FAIL", report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_acceptance, key=lambda k: int(k.split(".")[0])):
        status, nodeid = _acceptance[key]
        terminalreporter.write_line(f"criterion {key:>2}: {status}  ({nodeid.split('::')[-1]})")
