import random

import pytest


@pytest.fixture
def rng():
    return random.Random(20240611)


ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
"""criterion number -> (title, passed, detail), filled by test_acceptance.py"""


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
