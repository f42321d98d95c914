"""Acceptance criteria 1-10, each at its stated tolerance.

The full battery runs once per module; every test reports its one-line
verdict (echoed again in the terminal summary) and asserts the pass flag.
"""

import pytest

from eikolab import suite

import conftest


@pytest.fixture(scope="module")
def results():
    return {r.number: r for r in suite.run_battery("full")}


@pytest.mark.parametrize("number", range(1, 11))
def test_criterion(results, number, capsys):
    r = results[number]
    line = r.line()
    with capsys.disabled():
        print("\n" + line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert r.passed, line
