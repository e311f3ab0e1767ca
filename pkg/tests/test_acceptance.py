"""Acceptance suite: one PASS/FAIL line per criterion with the measured numbers.

Run directly (``python3 tests/test_acceptance.py``) or through pytest, which
prints the same lines as each criterion completes.
"""

import pytest

from mhdecay.acceptance import CRITERIA, SUITES, Workbench, run_criterion, verify


@pytest.fixture(scope="module")
def workbench():
    return Workbench(SUITES["default"])


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]:02d}-{c[1]}" for c in CRITERIA])
def test_criterion(number, workbench, capsys):
    result = run_criterion(number, workbench.settings, workbench)
    with capsys.disabled():
        print("\n" + result.line())
    if not result.passed:
        pytest.fail(result.line(), pytrace=False)


def test_coarse_suite_flags_convergence():
    results = {r.number: r for r in verify("coarse", numbers={1, 2, 3, 4})}
    for number in (1, 2, 3, 4):
        assert results[number].status == "FAIL", results[number].line()


if __name__ == "__main__":
    verify("default", emit=print)
