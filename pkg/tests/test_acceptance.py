"""The ten acceptance criteria at their stated tolerances, one test each."""

import pytest

from cloudrt import acceptance

from conftest import ACCEPT_LINES


@pytest.mark.slow
@pytest.mark.parametrize("number", acceptance.FULL)
def test_criterion(number, suite, capsys):
    res = acceptance.run_one(number, suite)
    line = res.line()
    ACCEPT_LINES.append((number, line))
    with capsys.disabled():
        print("\n" + line, flush=True)
    assert res.passed, line
