"""
Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``python tests/test_acceptance.py`` for the bare table,
or through pytest (``pytest tests/test_acceptance.py -s`` shows the lines
as they complete; they are also repeated in the terminal summary).
"""

import sys

import pytest

from qpath.validation import CHECKS, ValidationContext, format_line, run_checks

CRITERIA = [
    (1, "riccati_oracle"),
    (2, "periods"),
    (3, "planar_crosscheck"),
    (4, "escape_action"),
    (5, "convergence_order"),
    (6, "hamiltonian"),
    (7, "antiperiodic"),
    (8, "properties"),
    (9, "ordering"),
]

LINES = []


def test_criteria_cover_all_checks():
    assert sorted(name for _, name in CRITERIA) == sorted(CHECKS)


@pytest.mark.parametrize("number,name", CRITERIA, ids=[n for _, n in CRITERIA])
def test_criterion(ctx, number, name):
    (res,) = run_checks([name], ctx)
    line = f"[{number}] {format_line(res)}  ({res.seconds:.1f} s)"
    LINES.append(line)
    print(line)
    assert res.passed, res.summary


def main() -> int:
    ctx = ValidationContext()
    ok = True
    for number, name in CRITERIA:
        (res,) = run_checks([name], ctx)
        print(f"[{number}] {format_line(res)}  ({res.seconds:.1f} s)", flush=True)
        ok &= res.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
