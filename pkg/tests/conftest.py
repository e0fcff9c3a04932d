import json
import pathlib

import pytest

ORACLES = pathlib.Path(__file__).parent / "oracles" / "mc_oracles.json"


@pytest.fixture(scope="session")
def mc_oracles():
    return json.loads(ORACLES.read_text())["cases"]


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = {}


def record(cid, passed, detail):
    ACCEPTANCE[cid] = (bool(passed), detail)
    return bool(passed)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
