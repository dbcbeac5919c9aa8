"""Eigenvalue clustering, cluster means and symmetric aggregates.

Repeated eigenvalues are not differentiable individually, but any symmetric
function of a *complete* group of them is.  Clustering decides which
computed eigenvalues belong together; the cluster mean and the stable p-norm
and KS aggregates are the symmetric functions offered here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._core import element_energies
from .errors import ClusterError
from .assembly_eig import UnitElementMatrices
from .material import MaterialPoint
from .mesh import Mesh

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class ClusterSet:
    """Partition of ascending eigenvalues into multiplicity clusters.

    ``members[q]`` holds the eigen-indices of cluster q.  The last cluster is
    never known to be complete: an eigenvalue beyond the computed ones might
    still belong to it.
    """

    values: np.ndarray
    members: tuple[np.ndarray, ...]
    tol: float

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.members], dtype=int)

    @property
    def means(self) -> np.ndarray:
        return np.array([self.values[m].mean() for m in self.members])

    @property
    def complete(self) -> np.ndarray:
        flags = np.ones(self.count, dtype=bool)
        if self.count:
            flags[-1] = False
        return flags

    def n_values(self, n_clusters: int) -> int:
        """Number of eigenvalues held by the first ``n_clusters`` clusters."""
        return int(sum(m.size for m in self.members[:n_clusters]))


def cluster(values, tol: float = DEFAULT_TOL) -> ClusterSet:
    """Greedy clustering anchored at each cluster's smallest member.

    An eigenvalue joins the current cluster when its relative distance to the
    cluster minimum is at most ``tol``.
    """
    values = np.asarray(values, dtype=float)
    if not tol > 0:
        raise ClusterError(f"clustering tolerance must be positive, got {tol}")
    if values.ndim != 1 or values.size == 0:
        raise ClusterError("need a non-empty 1-D array of eigenvalues")
    if np.any(np.diff(values) < 0):
        raise ClusterError("eigenvalues must be sorted ascending")
    if values[0] <= 0:
        raise ClusterError("eigenvalues must be positive")
    members = []
    start = 0
    for k in range(1, values.size + 1):
        if k == values.size or abs(values[k] - values[start]) / abs(values[start]) > tol:
            members.append(np.arange(start, k))
            start = k
    return ClusterSet(values, tuple(members), float(tol))


def cluster_mean(values) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ClusterError("cannot average an empty cluster")
    return float(values.mean())


def eig_sensitivity(lam, phi, mesh: Mesh, unit: UnitElementMatrices, mp: MaterialPoint) -> np.ndarray:
    """``phi^T (dK/drho - lam dM/drho) phi`` for every element and channel.

    ``lam`` is a scalar or (k,) array; ``phi`` is a full-DOF vector or a
    (k, n_dofs) stack.  Returns (channels, n_ele) or (k, channels, n_ele).
    Point masses do not depend on the design and drop out.
    """
    single = np.ndim(phi) == 1
    phi = np.atleast_2d(phi)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    ue = phi[:, mesh.element_dofs]
    eK = element_energies(ue, unit.K)
    eM = element_energies(ue, unit.M)
    dE = np.asarray(mp.dE, dtype=float)
    drho = np.asarray(mp.drho, dtype=float)
    grads = dE[None] * eK[:, None] - lam[:, None, None] * drho[None] * eM[:, None]
    return grads[0] if single else grads


def simple_eig_sensitivity(clusters: ClusterSet, q: int, phi, mesh, unit, mp) -> np.ndarray:
    """Density gradient of eigenvalue ``q``, which must be a simple one."""
    owner = next(c for c in clusters.members if q in c)
    if owner.size != 1:
        raise ClusterError(f"eigenvalue {q} is repeated ({owner.size} members); use the cluster mean")
    return eig_sensitivity(clusters.values[q], phi, mesh, unit, mp)


def cluster_mean_sensitivity(members, values, phis, mesh, unit, mp) -> np.ndarray:
    """Density gradient of the mean of a cluster.

    ``phis`` is (N_q, n_dofs), one M-orthonormal eigenvector per member.  The
    average over members is invariant to how the eigensolver chose the basis
    of the eigenspace.
    """
    members = np.atleast_1d(members)
    phis = np.atleast_2d(phis)
    if members.size == 0:
        raise ClusterError("empty cluster")
    if phis.shape[0] != members.size:
        raise ClusterError(f"cluster has {members.size} members but {phis.shape[0]} eigenvectors")
    lam = np.asarray(values, dtype=float)[members]
    return eig_sensitivity(lam, phis, mesh, unit, mp).mean(axis=0)


def _floats(values) -> np.ndarray:
    values = np.asarray(values)
    return values if np.issubdtype(values.dtype, np.floating) else values.astype(float)


def pnorm_stable(values, p: float, beta0: float | None = None):
    """Scaled p-norm ``beta0 * (sum (v/beta0)**p)**(1/p)`` and its partials.

    Extended-precision input stays extended.
    """
    values = _floats(values)
    if p < 1:
        raise ValueError(f"p-norm exponent must be >= 1, got {p}")
    if np.any(values <= 0):
        raise ValueError("p-norm aggregation expects positive values")
    beta0 = values.max() if beta0 is None else values.dtype.type(beta0)
    ratio = values / beta0
    s = np.sum(ratio**p)
    value = beta0 * s ** (1.0 / p)
    partials = s ** (1.0 / p - 1.0) * ratio ** (p - 1.0)
    return value, partials


def ks_stable(values, q: float, beta0: float | None = None):
    """Shifted Kreisselmeier-Steinhauser maximum and its partials."""
    values = _floats(values)
    if not q > 0:
        raise ValueError(f"KS parameter must be positive, got {q}")
    beta0 = values.max() if beta0 is None else values.dtype.type(beta0)
    w = np.exp(q * (values - beta0))
    s = w.sum()
    return beta0 + np.log(s) / q, w / s
