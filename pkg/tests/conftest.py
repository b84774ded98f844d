import json
from fractions import Fraction
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", help="also run tests marked slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; pass --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def _parse_class(row):
    d = {tuple(map(int, k.split(","))): Fraction(v) for k, v in row["d_hat"].items()}
    c = tuple(Fraction(v) for v in row["c_hat"])
    return row["n"], d, c


@pytest.fixture(scope="session")
def tiny_classes():
    rows = json.loads((FIXTURES / "tiny_classes.json").read_text())
    return [(*_parse_class(r), r) for r in rows]


_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[(number, request.node.name)] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])
