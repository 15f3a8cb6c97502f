"""End-to-end acceptance runs, one per criterion.

Each run prints ``PASS``/``FAIL`` with its runtime and budget; the lines are
repeated in the terminal summary.  Run this file directly to print them
without pytest.
"""

import json

import pytest

from qpspec import repro

CRITERIA = [
    (1, "rotation-free"),
    (2, "kneser"),
    (3, "log-law"),
    (4, "power-law"),
    (5, "phase-ode"),
    (6, "relative-count"),
    (7, "triangle"),
    (8, "edge-pipeline"),
    (9, "kam"),
    (10, "sandwich"),
]

LINES = {}


def _line(number, res):
    return f"criterion {number:2d}: {res.line()}"


@pytest.mark.parametrize("number, name", CRITERIA, ids=[f"{n:02d}-{m}" for n, m in CRITERIA])
def test_criterion(number, name):
    res = repro.run(name)
    LINES[number] = _line(number, res)
    print(LINES[number])
    assert res.passed, json.dumps(res.details, indent=1)[:4000]
    assert res.within_budget, f"runtime {res.runtime:.1f} s over budget {res.budget} s"


if __name__ == "__main__":
    for number, name in CRITERIA:
        print(_line(number, repro.run(name)), flush=True)
