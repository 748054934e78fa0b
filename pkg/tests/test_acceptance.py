"""Acceptance criteria, one test each.

Every test prints a ``[PASS]`` / ``[FAIL]`` line with the measured values,
the tolerance and the runtime; the lines are repeated in the terminal
summary. Runtimes count against each criterion's limit.
Run directly (``python3 tests/test_acceptance.py``) for the plain table.
"""
import pytest

from gexpect import experiments

RESULT_LINES = []


@pytest.fixture(scope="module")
def settings():
    return experiments.Settings()


@pytest.mark.parametrize("criterion", experiments.CRITERIA,
                         ids=[c.__name__.removeprefix("criterion_") for c in experiments.CRITERIA])
def test_criterion(criterion, settings):
    result = criterion(settings)
    line = result.line()
    RESULT_LINES.append(line)
    print(line)
    assert result.passed, line
    assert result.runtime <= result.runtime_limit, f"too slow: {line}"


def test_tolerances_are_pinned():
    # guard against silently loosened settings
    s = experiments.Settings()
    assert (s.axiom_trials, s.oracle_m4, s.oracle_m6) == (100, 20, 5)
    assert s.pde_accuracy == "fine" and s.m == 12 and s.cross_m == 12
    assert s.m_list == (6, 8, 10, 12) and s.product_m == 8 and s.bias == 0.0
    assert experiments.EXACT_TOL == 1e-12


if __name__ == "__main__":
    import sys
    sys.exit(int(not all(r.ok for r in experiments.reproduce_all())))
