"""Acceptance suite: one test per shipped verification criterion.

Each test prints its ``[PASS]``/``[FAIL]`` line (run pytest with ``-s`` or
``-rA`` to see them all); the same checks back the ``thermocontact verify``
command.
"""

import sys

import pytest

from thermocontact import verification


@pytest.mark.parametrize(
    "criterion", verification.ALL_CRITERIA,
    ids=[f.__name__.replace("criterion_", "") for f in verification.ALL_CRITERIA])
def test_criterion(criterion):
    result = criterion()
    line = result.line()
    print(line)
    sys.stderr.write(line + "\n")
    assert result.passed, line
