import pytest

from junctionrl.config import make_config
from junctionrl.signals import MOVEMENTS

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def all_red():
    return {m: False for m in MOVEMENTS}


def green(*movements):
    sig = all_red()
    for m in movements:
        sig[m] = True
    return sig


def all_green():
    return {m: True for m in MOVEMENTS}


@pytest.fixture
def cfg():
    return make_config()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
