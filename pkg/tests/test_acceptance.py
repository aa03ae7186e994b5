"""The twelve acceptance criteria, one test each.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible with ``-s`` and
in the captured output of ``-v`` runs).
"""

import pytest

from groundstate.acceptance import CRITERIA, run_criterion


@pytest.mark.parametrize("cid", [c[0] for c in CRITERIA], ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(cid, tmp_path):
    res = run_criterion(cid, workdir=tmp_path)
    print(res.line())
    assert res.passed, res.detail


def test_all_criteria_listed():
    assert [c[0] for c in CRITERIA] == list(range(1, 13))
