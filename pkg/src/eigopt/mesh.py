"""Structured Q4/H8 meshes, supports, point masses and symmetry orbits."""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, SymmetryError

SYMMETRY_TAGS = ("none", "half", "quarter", "eighth")
_AXES = "xyz"


@dataclass(frozen=True)
class Mesh:
    """Regular grid of bilinear quads (2D) or trilinear bricks (3D).

    Nodes are numbered lexicographically with x fastest, then y, then z.
    Elements follow the same ordering over cells.
    """

    dim: int
    cells: tuple[int, ...]
    lengths: tuple[float, ...]
    nodes: np.ndarray
    elements: np.ndarray
    volumes: np.ndarray
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    point_masses: tuple[tuple[int, float], ...] = ()

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def dofs_per_node(self) -> int:
        return self.dim

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.dim

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.fixed_dofs] = False
        return np.flatnonzero(mask)

    @property
    def n_free(self) -> int:
        return self.n_dofs - self.fixed_dofs.size

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    @property
    def element_dofs(self) -> np.ndarray:
        """(n_ele, nodes_per_element * dim) global DOF numbers, node-major."""
        d = self.dim
        return (self.elements[:, :, None] * d + np.arange(d)).reshape(self.n_elements, -1)

    @property
    def diagonal(self) -> float:
        return float(np.sqrt(sum(length**2 for length in self.lengths)))

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())


def build_grid(dim: int, cells, lengths) -> Mesh:
    """Build a regular grid with ``cells`` elements along each axis."""
    if dim not in (2, 3):
        raise GeometryError(f"dimension must be 2 or 3, got {dim}")
    cells = tuple(int(c) for c in cells)
    lengths = tuple(float(s) for s in lengths)
    if len(cells) != dim or len(lengths) != dim:
        raise GeometryError("cells and lengths need one entry per axis")
    if min(cells) < 1:
        raise GeometryError(f"cells per axis must be >= 1, got {cells}")
    if not all(np.isfinite(lengths)) or min(lengths) <= 0.0:
        raise GeometryError(f"side lengths must be positive, got {lengths}")

    axes = [np.linspace(0.0, s, n + 1) for s, n in zip(lengths, cells)]
    # indexing="ij" over reversed axes so x varies fastest
    grids = np.meshgrid(*axes[::-1], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids[::-1]], axis=1)

    npx = [n + 1 for n in cells]
    idx = [np.arange(n) for n in cells]
    if dim == 2:
        j, i = np.meshgrid(idx[1], idx[0], indexing="ij")
        n0 = (i + j * npx[0]).ravel()
        elements = np.stack([n0, n0 + 1, n0 + 1 + npx[0], n0 + npx[0]], axis=1)
    else:
        k, j, i = np.meshgrid(idx[2], idx[1], idx[0], indexing="ij")
        layer = npx[0] * npx[1]
        n0 = (i + j * npx[0] + k * layer).ravel()
        bottom = [n0, n0 + 1, n0 + 1 + npx[0], n0 + npx[0]]
        elements = np.stack(bottom + [b + layer for b in bottom], axis=1)

    cell_volume = float(np.prod([s / n for s, n in zip(lengths, cells)]))
    volumes = np.full(elements.shape[0], cell_volume)
    return Mesh(dim, cells, lengths, nodes, elements.astype(np.int64), volumes)


def _axis_value(token: str, length: float) -> float:
    token = token.strip()
    if token == "min":
        return 0.0
    if token == "max":
        return length
    if token == "mid":
        return 0.5 * length
    return float(token)


def select_nodes(mesh: Mesh, where: str) -> np.ndarray:
    """Node ids matching a predicate such as ``"x=min"``, ``"corners&z=min"``
    or ``"x=max&y=mid"``.  Clauses joined by ``&`` are intersected."""
    tol = 1e-9 * mesh.diagonal
    mask = np.ones(mesh.n_nodes, dtype=bool)
    for clause in where.split("&"):
        clause = clause.strip()
        if clause == "all":
            continue
        if clause == "corners":
            on = np.ones(mesh.n_nodes, dtype=bool)
            for a in range(mesh.dim):
                c = mesh.nodes[:, a]
                on &= (np.abs(c) <= tol) | (np.abs(c - mesh.lengths[a]) <= tol)
            mask &= on
            continue
        name, sep, value = clause.partition("=")
        name = name.strip()
        if not sep or name not in _AXES[: mesh.dim]:
            raise GeometryError(f"cannot parse node predicate {clause!r}")
        a = _AXES.index(name)
        target = _axis_value(value, mesh.lengths[a])
        mask &= np.abs(mesh.nodes[:, a] - target) <= tol
    return np.flatnonzero(mask)


def apply_boundary(mesh: Mesh, supports) -> Mesh:
    """Fix DOFs on the nodes selected by each support entry.

    ``supports`` is a list of ``{"at": predicate, "dofs": "all" | [axes]}``.
    """
    if not supports:
        raise GeometryError("no supports given; rigid-body modes would be unconstrained")
    fixed = [mesh.fixed_dofs]
    for entry in supports:
        where = entry["at"]
        dofs = entry.get("dofs", "all")
        nodes = select_nodes(mesh, where)
        if nodes.size == 0:
            raise GeometryError(f"support predicate {where!r} matched no nodes")
        if dofs == "all":
            comps = list(range(mesh.dim))
        else:
            comps = [_AXES.index(c) if isinstance(c, str) else int(c) for c in dofs]
        if any(c < 0 or c >= mesh.dim for c in comps):
            raise GeometryError(f"bad DOF components {dofs!r}")
        fixed.append((nodes[:, None] * mesh.dim + np.array(comps)).ravel())
    fixed_dofs = np.unique(np.concatenate(fixed)).astype(np.int64)
    return dataclasses.replace(mesh, fixed_dofs=fixed_dofs)


def add_point_mass(mesh: Mesh, position, mass: float) -> Mesh:
    """Attach a lumped mass to the grid node nearest ``position``."""
    if mass < 0:
        raise GeometryError(f"point mass must be non-negative, got {mass}")
    position = np.asarray(position, dtype=float)
    if position.shape != (mesh.dim,):
        raise GeometryError(f"point-mass position needs {mesh.dim} coordinates")
    node = int(np.argmin(np.linalg.norm(mesh.nodes - position, axis=1)))
    return dataclasses.replace(mesh, point_masses=mesh.point_masses + ((node, float(mass)),))


@dataclass(frozen=True)
class OrbitMap:
    """Partition of elements into symmetry orbits, one design variable each."""

    tag: str
    orbits: tuple[np.ndarray, ...]
    element_orbit: np.ndarray  # orbit index of every element

    @property
    def n_reduced(self) -> int:
        return len(self.orbits)

    @property
    def n_elements(self) -> int:
        return self.element_orbit.size

    @property
    def sizes(self) -> np.ndarray:
        return np.array([o.size for o in self.orbits])

    @property
    def representatives(self) -> np.ndarray:
        """Lowest element index of every orbit."""
        return np.array([o[0] for o in self.orbits], dtype=np.int64)

    def symmetrize(self, field) -> np.ndarray:
        """Copy each representative's value to its whole orbit."""
        field = np.asarray(field)
        return field[self.representatives][self.element_orbit]


def _group_images(mesh: Mesh, tag: str) -> np.ndarray:
    """Element index of every element's image under each group member."""
    n = mesh.cells
    cell = np.indices(n[::-1]).reshape(mesh.dim, -1)[::-1]  # (dim, ne), x first

    def mx(c):
        return np.vstack([n[0] - 1 - c[0], c[1:]])

    def my(c):
        return np.vstack([c[:1], n[1] - 1 - c[1:2], c[2:]])

    def sw(c):
        return np.vstack([c[1::-1], c[2:]])

    generators = {"none": [], "half": [mx], "quarter": [mx, my], "eighth": [mx, my, sw]}[tag]
    images = []
    for r in range(len(generators) + 1):
        for combo in itertools.combinations(generators, r):
            c = cell
            for f in combo:
                c = f(c)
            images.append(np.ravel_multi_index(tuple(c[::-1]), n[::-1]))
    return np.array(images)


def compute_orbits(mesh: Mesh, tag: str = "none") -> OrbitMap:
    """Group elements whose cells map onto each other under the mirror set.

    ``half`` mirrors across x = Lx/2, ``quarter`` adds y = Ly/2 and ``eighth``
    adds the x = y diagonal (needs a square cross-section in x-y).
    """
    if tag not in SYMMETRY_TAGS:
        raise SymmetryError(f"unknown symmetry tag {tag!r}")
    if tag == "eighth":
        if mesh.cells[0] != mesh.cells[1] or not np.isclose(mesh.lengths[0], mesh.lengths[1], rtol=1e-12):
            raise SymmetryError("eighth symmetry needs a square x-y domain with nx == ny")

    images = _group_images(mesh, tag)
    leader = images.min(axis=0)
    leaders, element_orbit = np.unique(leader, return_inverse=True)
    order = np.argsort(element_orbit, kind="stable")
    bounds = np.cumsum(np.bincount(element_orbit, minlength=leaders.size))[:-1]
    orbits = tuple(np.split(order, bounds))
    return OrbitMap(tag, orbits, element_orbit.astype(np.int64))
