"""The fourteen acceptance criteria, one test each.

Every test prints a single PASS/FAIL line with the measured values and
limits; the lines are repeated in the terminal summary.
"""
import pytest

from lightray.checks import CHECKS

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", sorted(CHECKS), ids=lambda k: f"criterion_{k:02d}")
def test_criterion(number):
    res = CHECKS[number]()
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line
