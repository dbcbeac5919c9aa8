import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigopt.errors import FilterError
from eigopt.filter import build_filter, filter_backward, filter_forward, orbit_expand, orbit_reduce_grad
from eigopt.mesh import build_grid, compute_orbits


def test_single_element():
    F = build_filter(build_grid(2, (1, 1), (1, 1)), 0.7)
    np.testing.assert_array_equal(F.W.toarray(), [[1.0]])


def test_small_radius_gives_identity():
    F = build_filter(build_grid(2, (5, 3), (5, 3)), 0.99)
    np.testing.assert_array_equal(F.W.toarray(), np.eye(15))


def test_two_element_row():
    d, r = 1.0, 1.5
    F = build_filter(build_grid(2, (2, 1), (2, 1)), r)
    expected = np.array([r, r - d]) / (2 * r - d)
    np.testing.assert_allclose(F.W.toarray()[0], expected, rtol=1e-15)


def test_three_element_chain_product():
    F = build_filter(build_grid(2, (3, 1), (3, 1)), 1.5)
    W = np.array([[1.5, 0.5, 0.0], [0.5, 1.5, 0.5], [0.0, 0.5, 1.5]])
    W /= W.sum(axis=1, keepdims=True)
    x = np.array([0.2, 0.9, 0.4])
    np.testing.assert_allclose(filter_forward(F, x), W @ x, rtol=1e-15)


def test_bad_radius_and_shapes():
    mesh = build_grid(2, (2, 2), (1, 1))
    with pytest.raises(FilterError):
        build_filter(mesh, 0.0)
    F = build_filter(mesh, 0.6)
    with pytest.raises(FilterError):
        filter_forward(F, np.ones(3))
    with pytest.raises(FilterError):
        filter_backward(F, np.ones(5))
    orbits = compute_orbits(mesh, "half")
    with pytest.raises(FilterError):
        orbit_expand(orbits, np.ones(4))
    with pytest.raises(FilterError):
        orbit_reduce_grad(orbits, np.ones(2))


@given(st.integers(2, 3), st.lists(st.integers(1, 7), min_size=3, max_size=3),
       st.floats(0.3, 3.0), st.integers(0, 2**31 - 1))
def test_filter_properties(dim, cells, rmin, seed):
    mesh = build_grid(dim, cells[:dim], [1.0, 1.3, 0.8][:dim])
    F = build_filter(mesh, rmin)
    W = F.W.toarray()
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert W.min() >= 0.0
    c = mesh.centroids
    dist = np.linalg.norm(c[:, None] - c[None], axis=2)
    np.testing.assert_array_equal(W > 0, dist < rmin)
    g = np.random.default_rng(seed)
    x, gr = g.uniform(0.01, 1, mesh.n_elements), g.standard_normal(mesh.n_elements)
    rho = filter_forward(F, x)
    assert rho.min() >= x.min() - 1e-14 and rho.max() <= x.max() + 1e-14
    lhs, rhs = gr @ rho, filter_backward(F, gr) @ x
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), np.abs(gr).sum())
    np.testing.assert_allclose(filter_forward(F, np.full(mesh.n_elements, 0.3)), 0.3, rtol=1e-14)
    np.testing.assert_allclose(filter_backward(F, np.full(mesh.n_elements, 2.0)), 2.0 * W.sum(axis=0),
                               rtol=1e-13)


def test_none_symmetry_maps_are_identity():
    mesh = build_grid(2, (3, 4), (1, 1))
    orbits = compute_orbits(mesh, "none")
    v = np.arange(12.0)
    np.testing.assert_array_equal(orbit_expand(orbits, v), v)
    np.testing.assert_array_equal(orbit_reduce_grad(orbits, v), v)


def test_orbit_of_eight_sums():
    orbits = compute_orbits(build_grid(2, (4, 4), (1, 1)), "eighth")
    g = orbit_reduce_grad(orbits, np.ones(16))
    np.testing.assert_array_equal(g, orbits.sizes)
    assert 8 in g.tolist()


@given(st.sampled_from(["half", "quarter", "eighth"]), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_expand_reduce_adjoint(tag, n, seed):
    mesh = build_grid(2, (n, n), (1, 1))
    orbits = compute_orbits(mesh, tag)
    g = np.random.default_rng(seed)
    gf, d = g.standard_normal(mesh.n_elements), g.standard_normal(orbits.n_reduced)
    lhs, rhs = gf @ orbit_expand(orbits, d), orbit_reduce_grad(orbits, gf) @ d
    assert abs(lhs - rhs) <= 1e-12 * (np.abs(gf).sum() * np.abs(d).max())


def test_symmetric_input_gives_symmetric_density():
    mesh = build_grid(2, (10, 10), (1, 1))
    orbits = compute_orbits(mesh, "eighth")
    F = build_filter(mesh, 0.25)
    x = orbit_expand(orbits, np.random.default_rng(3).uniform(0.1, 1, orbits.n_reduced))
    rho = filter_forward(F, x).reshape(10, 10)
    for img in (rho[:, ::-1], rho[::-1, :], rho.T):
        np.testing.assert_allclose(img, rho, rtol=1e-14, atol=0)
