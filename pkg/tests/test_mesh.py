import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigopt.errors import GeometryError, SymmetryError
from eigopt.mesh import add_point_mass, apply_boundary, build_grid, compute_orbits, select_nodes


@pytest.mark.parametrize("dim,cells,nodes,elements", [
    (2, (2, 2), 9, 4), (2, (1, 1), 4, 1), (3, (2, 2, 2), 27, 8)])
def test_grid_counts(dim, cells, nodes, elements):
    mesh = build_grid(dim, cells, (1.0,) * dim)
    assert mesh.n_nodes == nodes
    assert mesh.n_elements == elements


def test_grid_volumes_and_numbering():
    mesh = build_grid(2, (2, 2), (1.0, 1.0))
    np.testing.assert_allclose(mesh.volumes, 0.25)
    # x varies fastest
    np.testing.assert_allclose(mesh.nodes[:3], [[0, 0], [0.5, 0], [1, 0]])
    np.testing.assert_array_equal(mesh.elements[0], [0, 1, 4, 3])


@pytest.mark.parametrize("bad", [dict(dim=4, cells=(1,) * 4, lengths=(1,) * 4),
                                 dict(dim=2, cells=(0, 2), lengths=(1, 1)),
                                 dict(dim=2, cells=(2, 2), lengths=(1, -1)),
                                 dict(dim=2, cells=(2,), lengths=(1, 1))])
def test_grid_rejects_bad_geometry(bad):
    with pytest.raises(GeometryError):
        build_grid(**bad)


@given(st.integers(2, 3), st.lists(st.integers(1, 6), min_size=3, max_size=3),
       st.lists(st.floats(0.1, 10.0), min_size=3, max_size=3))
def test_grid_invariants(dim, cells, lengths):
    mesh = build_grid(dim, cells[:dim], lengths[:dim])
    assert mesh.total_volume == pytest.approx(np.prod(lengths[:dim]), rel=1e-13)
    assert np.all(mesh.volumes > 0)
    assert mesh.elements.min() >= 0 and mesh.elements.max() < mesh.n_nodes
    assert all(len(set(e)) == 2 ** dim for e in mesh.elements.tolist())


def test_corner_supports():
    mesh = apply_boundary(build_grid(2, (4, 4), (1, 1)), [{"at": "corners", "dofs": "all"}])
    assert mesh.fixed_dofs.size == 8
    assert mesh.n_free == mesh.n_dofs - 8


def test_clamped_beam_supports():
    nx, ny = 8, 3
    mesh = apply_boundary(build_grid(2, (nx, ny), (4, 1)), [{"at": "x=min"}, {"at": "x=max"}])
    assert mesh.fixed_dofs.size == 2 * (ny + 1) * 2


def test_support_components_and_intersection():
    mesh = build_grid(3, (2, 2, 2), (1, 1, 1))
    nodes = select_nodes(mesh, "x=max&y=mid&z=min")
    np.testing.assert_allclose(mesh.nodes[nodes], [[1.0, 0.5, 0.0]])
    fixed = apply_boundary(mesh, [{"at": "z=min", "dofs": ["z"]}])
    assert fixed.fixed_dofs.size == 9
    assert np.all(fixed.fixed_dofs % 3 == 2)


def test_support_errors():
    mesh = build_grid(2, (2, 2), (1, 1))
    with pytest.raises(GeometryError):
        apply_boundary(mesh, [])
    with pytest.raises(GeometryError):
        apply_boundary(mesh, [{"at": "x=5"}])
    with pytest.raises(GeometryError):
        apply_boundary(mesh, [{"at": "q=min"}])


def test_point_mass_snaps_to_nearest_node():
    mesh = add_point_mass(build_grid(2, (4, 2), (2, 1)), (1.02, 0.49), 3.0)
    node, mass = mesh.point_masses[0]
    np.testing.assert_allclose(mesh.nodes[node], [1.0, 0.5])
    assert mass == 3.0
    with pytest.raises(GeometryError):
        add_point_mass(mesh, (0, 0), -1.0)


@pytest.mark.parametrize("tag,count,sizes", [
    ("none", 400, {1: 400}), ("half", 200, {2: 200}), ("quarter", 100, {4: 100}),
    ("eighth", 55, {8: 45, 4: 10})])
def test_orbit_counts_on_square(tag, count, sizes):
    orbits = compute_orbits(build_grid(2, (20, 20), (4, 4)), tag)
    assert orbits.n_reduced == count
    vals, counts = np.unique(orbits.sizes, return_counts=True)
    assert dict(zip(vals.tolist(), counts.tolist())) == sizes


def test_orbit_order_follows_lowest_member():
    orbits = compute_orbits(build_grid(2, (6, 6), (1, 1)), "eighth")
    leaders = [int(o.min()) for o in orbits.orbits]
    assert leaders == sorted(leaders)


def test_eighth_needs_square():
    with pytest.raises(SymmetryError):
        compute_orbits(build_grid(2, (4, 2), (2, 1)), "eighth")
    with pytest.raises(SymmetryError):
        compute_orbits(build_grid(2, (2, 2), (1, 1)), "sixth")


def _reflections(tag, lengths):
    lx, ly = lengths[:2]
    mx = lambda c: np.c_[lx - c[:, 0], c[:, 1:]]
    my = lambda c: np.c_[c[:, :1], ly - c[:, 1], c[:, 2:]]
    sw = lambda c: np.c_[c[:, 1], c[:, 0], c[:, 2:]]
    return {"none": [], "half": [mx], "quarter": [mx, my], "eighth": [mx, my, sw]}[tag]


@given(st.sampled_from(["half", "quarter", "eighth"]), st.integers(1, 7), st.integers(1, 7),
       st.integers(2, 3))
def test_orbits_are_closed_under_reflection(tag, nx, nz, dim):
    ny = nx if tag == "eighth" else nx + 1
    cells = (nx, ny, nz)[:dim]
    lengths = (2.0, 2.0 * ny / nx, 1.0)[:dim]
    mesh = build_grid(dim, cells, lengths)
    orbits = compute_orbits(mesh, tag)
    assert orbits.sizes.sum() == mesh.n_elements
    group = {"half": 2, "quarter": 4, "eighth": 8}[tag]
    assert np.all(group % orbits.sizes == 0)
    cen = mesh.centroids
    tol = 1e-12 * mesh.diagonal
    for f in _reflections(tag, lengths):
        img = f(cen)
        d = np.linalg.norm(img[:, None, :] - cen[None, :, :], axis=2)
        partner = d.argmin(axis=1)
        assert np.all(d.min(axis=1) <= tol)
        np.testing.assert_array_equal(orbits.element_orbit[partner], orbits.element_orbit)
    for o in orbits.orbits:
        assert np.ptp(mesh.volumes[o]) == 0.0


def test_symmetrize_copies_representatives():
    orbits = compute_orbits(build_grid(2, (6, 6), (1, 1)), "eighth")
    np.testing.assert_array_equal(orbits.representatives, [o.min() for o in orbits.orbits])
    field = np.arange(36.0)
    sym = orbits.symmetrize(field)
    for o in orbits.orbits:
        assert np.all(sym[o] == field[o.min()])
