import numpy as np
import pytest

from eigopt.optimize import compute_spectrum, evaluate
from eigopt.spectrum import cluster_mean_sensitivity, eig_sensitivity
from eigopt.verify import (PerturbationError, PreciseSpectrum, cdm_gradient, compare, constraint_reports,
                           full_gradient)

from conftest import block_problem


def test_cdm_square():
    g = cdm_gradient(lambda x: x[0] ** 2, np.array([1.0]), 1e-8).gradient
    assert g[0] == pytest.approx(2.0, abs=1e-6)


def test_cdm_constant():
    g = cdm_gradient(lambda x: 3.0, np.zeros(4)).gradient
    assert np.all(np.abs(g) <= 1e-6 * 3.0)


def test_cdm_one_sided_at_bounds():
    res = cdm_gradient(lambda x: np.sum(x**2), np.array([0.0, 0.5, 1.0]), 1e-6, 0.0, 1.0)
    np.testing.assert_array_equal(res.one_sided, [True, False, True])
    np.testing.assert_allclose(res.gradient, [0.0, 1.0, 2.0], atol=1e-5)


def test_cdm_reports_failing_coordinate():
    def f(x):
        if x[2] > 0.5:
            raise RuntimeError("boom")
        return x.sum()

    with pytest.raises(PerturbationError) as info:
        cdm_gradient(f, np.array([0.1, 0.1, 0.5]), 1e-3)
    assert info.value.index == 2


def test_compare_verdicts():
    a = np.array([1.0, -2.0, 3.0])
    r = compare(a, a)
    assert r.max_error == 0.0 and r.verdict == "match"
    assert compare(np.zeros(3), np.zeros(3)).verdict == "match"
    off = a.copy()
    off[1] *= 1.1
    assert compare(a, off, 1e-4).verdict == "mismatch"
    assert compare(a, a * (1 + 5e-4), 1e-4).verdict == "inconclusive"
    with pytest.raises(ValueError):
        compare(a, a[:2])


@pytest.fixture(scope="module")
def block():
    p = block_problem(cells=(4, 4), m=4)
    x = p.initial_design().ravel()
    x = x * (1 + 0.2 * np.sin(np.arange(x.size)))
    return p, compute_spectrum(p, x)


def test_precise_spectrum_agrees_with_solver(block):
    p, st_ = block
    groups = st_.clusters.members[:4]
    vals = PreciseSpectrum(p, groups, st_.eig.count)(st_.x)
    for g, v in zip(groups, vals):
        np.testing.assert_allclose(v.astype(float), st_.eig.values[g], rtol=1e-9)


def test_simple_eigenvalue_gradient_matches_cdm(block):
    p, st_ = block
    k = 3
    assert st_.clusters.sizes[k] == 1
    ana = eig_sensitivity(st_.eig.values[k], st_.phis[k], p.mesh, p.assembler.unit, st_.material)
    precise = PreciseSpectrum(p, [st_.clusters.members[k]], st_.eig.count)
    num = cdm_gradient(lambda x: precise(x)[0][0], st_.x.astype(np.longdouble).ravel(), 1e-8)
    assert compare(full_gradient(p, ana, "all"), num.gradient).max_error <= 1e-5


def test_first_cluster_mean_matches_cdm(block):
    p, st_ = block
    mem = st_.clusters.members[0]
    ana = cluster_mean_sensitivity(mem, st_.eig.values, st_.phis[mem], p.mesh, p.assembler.unit,
                                   st_.material)
    precise = PreciseSpectrum(p, [mem], st_.eig.count)
    num = cdm_gradient(lambda x: precise(x)[0].mean(), st_.x.astype(np.longdouble).ravel(), 1e-8)
    assert compare(full_gradient(p, ana, "all"), num.gradient).max_error <= 1e-5


def test_constraint_reports_cover_every_constraint(block):
    p, st_ = block
    lam = st_.clusters.means[0]
    reps = constraint_reports(p, st_, [0.9 * lam])
    assert len(reps) == 2 * p.n_constraints
    assert all(r.matched for r in reps), [(r.name, r.max_error) for r in reps if not r.matched]
    ev = evaluate(p, st_.x_reduced, [0.9 * lam], st_)
    assert reps[0].analytic.size == ev.dx.shape[1]
