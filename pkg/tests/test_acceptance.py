"""The acceptance gate: every criterion runs at its pinned tolerance and prints
one pass/fail line.  The criteria live in singhyp.acceptance, shared with the
CLI suite."""

import pytest

from singhyp.acceptance import CRITERIA


@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda f: f.__name__)
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print(f"\n{result.line()}")
    scalars = {k: v for k, v in result.details.items()
               if isinstance(v, (int, float, bool))}
    assert result.passed, f"criterion {result.number} failed: {scalars}"
