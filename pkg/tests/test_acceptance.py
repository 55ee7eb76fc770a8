"""Acceptance criteria, one test each, at their stated tolerances and budgets.

Each test prints a PASS/FAIL line.  Run directly with
``python tests/test_acceptance.py`` for the bare report.
"""
import sys

import pytest

from gfc import acceptance


@pytest.mark.parametrize("cid", list(acceptance.CRITERIA), ids=lambda c: f"criterion_{c}")
def test_criterion(cid, capsys):
    res = acceptance.run(cid)
    with capsys.disabled():
        print("\n" + res.line(), flush=True)
    assert res.metric_ok, res.detail
    assert res.within_budget, f"runtime {res.runtime:.1f}s over budget {res.budget:g}s"


def test_line_format():
    res = acceptance.CriterionResult(3, "demo", True, "ok", 0.5, 10.0)
    assert res.line().startswith("[PASS] criterion 3: demo")
    assert not acceptance.CriterionResult(3, "demo", True, "ok", 11.0, 10.0).passed


if __name__ == "__main__":
    results = acceptance.run_all()
    for r in results:
        print(r.line())
    sys.exit(0 if all(r.passed for r in results) else 1)
