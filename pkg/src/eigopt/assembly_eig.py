"""Element matrices, global assembly and the smallest generalized eigenpairs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, ConvergenceError, GeometryError, SolverError
from .mesh import Mesh

_GAUSS = (-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0))
_Q4_REF = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
_H8_REF = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)


@dataclass(frozen=True)
class UnitElementMatrices:
    """Element stiffness for E = 1 and consistent mass for unit density."""

    K: np.ndarray
    M: np.ndarray


@dataclass(frozen=True)
class EigenSet:
    """Ascending eigenvalues with M-orthonormal eigenvectors (columns) over
    the free DOFs."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def count(self) -> int:
        return self.values.size

    @property
    def omegas(self) -> np.ndarray:
        return np.sqrt(self.values)


PLANE_MODES = ("strain", "stress")


def elasticity_matrix(nu: float, dim: int, plane: str = "strain") -> np.ndarray:
    """Isotropic Voigt matrix for E = 1; ``plane`` picks the 2D reduction."""
    lam = nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = 1.0 / (2.0 * (1.0 + nu))
    if dim == 2:
        if plane not in PLANE_MODES:
            raise GeometryError(f"plane must be one of {PLANE_MODES}, got {plane!r}")
        if plane == "stress":
            lam = 2.0 * lam * mu / (lam + 2.0 * mu)
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[:3, :3] += 2 * mu * np.eye(3)
    D[3:, 3:] = mu * np.eye(3)
    return D


def _shape(ref: np.ndarray, xi):
    """Trilinear/bilinear shape functions and their natural derivatives."""
    terms = 1.0 + ref * np.asarray(xi)  # (nn, dim)
    N = np.prod(terms, axis=1) / 2 ** ref.shape[1]
    dN = np.empty_like(ref)
    for a in range(ref.shape[1]):
        others = np.prod(np.delete(terms, a, axis=1), axis=1)
        dN[:, a] = ref[:, a] * others / 2 ** ref.shape[1]
    return N, dN


def _strain_matrix(dNdx: np.ndarray) -> np.ndarray:
    nn, dim = dNdx.shape
    if dim == 2:
        B = np.zeros((3, 2 * nn))
        B[0, 0::2] = dNdx[:, 0]
        B[1, 1::2] = dNdx[:, 1]
        B[2, 0::2] = dNdx[:, 1]
        B[2, 1::2] = dNdx[:, 0]
        return B
    B = np.zeros((6, 3 * nn))
    for a in range(3):
        B[a, a::3] = dNdx[:, a]
    # engineering shear strains yz, xz, xy
    for row, (a, b) in zip((3, 4, 5), ((1, 2), (0, 2), (0, 1))):
        B[row, a::3] = dNdx[:, b]
        B[row, b::3] = dNdx[:, a]
    return B


def unit_matrices(coords, nu: float, dim: int | None = None, plane: str = "strain") -> UnitElementMatrices:
    """Gauss-integrated (2 points per axis) unit stiffness and mass matrices
    for one Q4 or H8 element with node coordinates ``coords``."""
    coords = np.asarray(coords, dtype=float)
    dim = coords.shape[1] if dim is None else dim
    ref = {2: _Q4_REF, 3: _H8_REF}.get(dim)
    if ref is None or coords.shape != ref.shape:
        raise GeometryError(f"expected {2 ** dim} nodes with {dim} coordinates")
    D = elasticity_matrix(nu, dim, plane)
    ndof = coords.shape[0] * dim
    K = np.zeros((ndof, ndof))
    M = np.zeros((ndof, ndof))
    for xi in itertools.product(_GAUSS, repeat=dim):
        N, dN = _shape(ref, xi)
        J = dN.T @ coords
        detJ = np.linalg.det(J)
        if detJ <= 0:
            raise GeometryError("element has a non-positive Jacobian")
        B = _strain_matrix(dN @ np.linalg.inv(J).T)
        K += B.T @ D @ B * detJ
        Nmat = np.kron(N[None, :], np.eye(dim))
        M += Nmat.T @ Nmat * detJ
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    return UnitElementMatrices(K, M)


def mesh_unit_matrices(mesh: Mesh, nu: float, plane: str = "strain") -> UnitElementMatrices:
    """Unit matrices of a structured mesh, where every element is congruent."""
    return unit_matrices(mesh.nodes[mesh.elements[0]], nu, mesh.dim, plane)


class Assembler:
    """Scatter pattern of a mesh, reused across design updates."""

    def __init__(self, mesh: Mesh, unit: UnitElementMatrices):
        if mesh.fixed_dofs.size == 0:
            raise AssemblyError("no fixed DOFs; rigid-body modes must be constrained")
        free = mesh.free_dofs
        if free.size == 0:
            raise AssemblyError("system is fully constrained (0 free DOFs)")
        self.mesh = mesh
        self.unit = unit
        self.free = free
        edofs = mesh.element_dofs
        nd = edofs.shape[1]
        glob_to_free = np.full(mesh.n_dofs, -1, dtype=np.int64)
        glob_to_free[free] = np.arange(free.size)
        fe = glob_to_free[edofs]  # (ne, nd)
        rows = np.repeat(fe, nd, axis=1)
        cols = np.tile(fe, (1, nd))
        keep = (rows >= 0) & (cols >= 0)
        self._elem = np.nonzero(keep)[0]
        flat = np.nonzero(keep.ravel())[0] % (nd * nd)
        self._kvals = unit.K.ravel()[flat]
        self._mvals = unit.M.ravel()[flat]
        self._rows = rows[keep]
        self._cols = cols[keep]
        self.n = free.size
        diag = np.zeros(self.n)
        for node, mass in mesh.point_masses:
            for d in range(mesh.dim):
                k = glob_to_free[node * mesh.dim + d]
                if k >= 0:
                    diag[k] += mass
        self._point = sp.diags(diag) if np.any(diag) else None

    def __call__(self, E, rho):
        E = np.asarray(E, dtype=float)
        rho = np.asarray(rho, dtype=float)
        ne = self.mesh.n_elements
        if E.shape != (ne,) or rho.shape != (ne,):
            raise AssemblyError(f"coefficient vectors must have length {ne}")
        if np.any(E <= 0) or np.any(rho <= 0):
            raise AssemblyError("element coefficients must be positive")
        shape = (self.n, self.n)
        K = sp.coo_matrix((E[self._elem] * self._kvals, (self._rows, self._cols)), shape=shape).tocsc()
        M = sp.coo_matrix((rho[self._elem] * self._mvals, (self._rows, self._cols)), shape=shape).tocsc()
        if self._point is not None:
            M = (M + self._point).tocsc()
        return K, M

    def full_vectors(self, vectors: np.ndarray) -> np.ndarray:
        """Scatter free-DOF vectors (columns) into full DOF vectors (rows)."""
        out = np.zeros((vectors.shape[1], self.mesh.n_dofs))
        out[:, self.free] = vectors.T
        return out


def assemble(mesh: Mesh, E, rho, unit: UnitElementMatrices):
    """Global K and M over the free DOFs, point masses included."""
    return Assembler(mesh, unit)(E, rho)


def factorize_spd(K):
    """Sparse LU with diagonal pivoting; the pivots give the inertia, so a
    non-positive pivot means K is not positive definite."""
    try:
        lu = spla.splu(sp.csc_matrix(K), permc_spec="MMD_AT_PLUS_A",
                       diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise SolverError(f"stiffness factorization failed: {exc}") from exc
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
        raise SolverError("stiffness matrix is not positive definite")
    return lu


def solve_smallest(K, M, n: int, tol: float = 1e-10, maxiter: int | None = None) -> EigenSet:
    """The ``n`` smallest eigenpairs of ``K phi = lam M phi``.

    Shift-invert Lanczos about zero on the factorized stiffness, started from
    a fixed vector so repeated calls are deterministic.
    """
    nf = K.shape[0]
    if not 1 <= n < nf:
        raise SolverError(f"requested {n} eigenpairs from a system with {nf} DOFs")
    lu = factorize_spd(K)
    opinv = spla.LinearOperator((nf, nf), matvec=lu.solve, dtype=float)
    v0 = np.cos(np.arange(nf) * 0.7) + 1.5  # fixed start vector
    ncv = min(nf, max(2 * n + 1, n + 20))
    maxiter = 30 * n if maxiter is None else maxiter
    try:
        vals, vecs = spla.eigsh(K, k=n, M=M, sigma=0.0, which="LM", OPinv=opinv,
                                v0=v0, ncv=ncv, tol=tol, maxiter=maxiter)
    except spla.ArpackNoConvergence as exc:
        residuals = None
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            residuals = np.linalg.norm(K @ exc.eigenvectors - M @ exc.eigenvectors * exc.eigenvalues, axis=0)
        raise ConvergenceError(f"eigensolver did not converge for {n} pairs", residuals) from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    if np.any(vals <= 0):
        raise SolverError("non-positive eigenvalue; check supports and coefficients")
    # M-normalize; ARPACK already returns M-orthogonal vectors
    vecs = vecs / np.sqrt(np.einsum("ij,ij->j", vecs, M @ vecs))
    return EigenSet(vals, vecs)
