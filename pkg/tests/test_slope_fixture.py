"""The slope fixture shared with the plotting front end.

fixtures/slope_expected.json freezes this module's own fits; the front end
asserts agreement with the same file to 1e-9, which ties its OLS definition
to this one.
"""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mckean.metrics import loglog_slope

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def test_fixture_slopes_are_frozen():
    with open(FIXTURES / "slope_fixture.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["metric"] == "variance"]
    expected = json.loads((FIXTURES / "slope_expected.json").read_text())
    for eps in ("0.3", "0.5"):
        pts = sorted(
            ((int(r["N"]), float(r["value"])) for r in rows if r["eps"] == eps),
        )
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.array([p[1] for p in pts], dtype=float)
        slope, intercept, r2 = loglog_slope(xs, ys)
        want = expected[f"var-N:eps={eps}"]
        assert slope == pytest.approx(want["slope"], abs=1e-12)
        assert intercept == pytest.approx(want["intercept"], abs=1e-12)
        assert r2 == pytest.approx(want["r2"], abs=1e-12)
