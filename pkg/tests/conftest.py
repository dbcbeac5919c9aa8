"""Shared fixtures and the acceptance summary printed after the run."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from eigopt.filter import build_filter
from eigopt.material import MaterialScheme
from eigopt.mesh import apply_boundary, build_grid, compute_orbits
from eigopt.optimize import BoundProblem

settings.register_profile("eigopt", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("eigopt")

# acceptance results, filled in by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def block_problem(cells=(4, 4), length=1.0, symmetry="none", scheme="solid-void", kind="eigmax",
                  n=1, m=4, rmin=None, thresholds=None, supports=None, E=None, rho=None):
    """Square block with corner supports, small enough for unit tests."""
    mesh = build_grid(2, cells, (length, length))
    mesh = apply_boundary(mesh, supports or [{"at": "corners", "dofs": "all"}])
    k = {"solid-void": 1, "bi": 2, "bi-void": 2, "tri-void": 3}[scheme]
    E = E or (1.0, 0.5, 0.3)[:k]
    rho = rho or (1.0, 0.6, 0.35)[:k]
    ms = MaterialScheme(scheme, E=E, rho=rho)
    if thresholds is None:
        thresholds = {"solid-void": (0.5,), "bi": (0.5,), "bi-void": (0.5, 0.25),
                      "tri-void": (0.6, 0.4, 0.2)}[scheme]
    rmin = 1.5 * length / cells[0] if rmin is None else rmin
    return BoundProblem(kind, n, mesh, ms, build_filter(mesh, rmin), compute_orbits(mesh, symmetry),
                        thresholds, m=m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
