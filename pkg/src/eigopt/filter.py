"""Linear density filter and symmetry-orbit maps, with their adjoints.

Design variables flow ``x_reduced -> orbit_expand -> filter_forward -> rho``;
gradients flow back through ``filter_backward`` and ``orbit_reduce_grad``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._core import filter_triplets
from .errors import FilterError
from .mesh import Mesh, OrbitMap


@dataclass(frozen=True)
class FilterOperator:
    W: sp.csr_matrix
    rmin: float

    @property
    def n(self) -> int:
        return self.W.shape[0]


def build_filter(mesh: Mesh, rmin: float) -> FilterOperator:
    """Row-normalized cone filter weighted by element volume."""
    if not rmin > 0:
        raise FilterError(f"filter radius must be positive, got {rmin}")
    n = mesh.n_elements
    spacing = [s / c for s, c in zip(mesh.lengths, mesh.cells)]
    rows, cols, vals = filter_triplets(mesh.cells, spacing, mesh.volumes, float(rmin))
    W = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    # canonical storage order, so sums do not depend on how triplets were generated
    W.sum_duplicates()
    W.sort_indices()
    row_sums = np.asarray(W.sum(axis=1)).ravel()
    W = (sp.diags(1.0 / row_sums) @ W).tocsr()
    W.sort_indices()
    return FilterOperator(W, float(rmin))


def filter_forward(F: FilterOperator, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (F.n,):
        raise FilterError(f"expected {F.n} design values, got shape {x.shape}")
    return F.W @ x


def filter_backward(F: FilterOperator, g_rho) -> np.ndarray:
    g_rho = np.asarray(g_rho, dtype=float)
    if g_rho.shape != (F.n,):
        raise FilterError(f"expected {F.n} gradient values, got shape {g_rho.shape}")
    return F.W.T @ g_rho


def orbit_expand(orbits: OrbitMap, x_reduced) -> np.ndarray:
    x_reduced = np.asarray(x_reduced, dtype=float)
    if x_reduced.shape != (orbits.n_reduced,):
        raise FilterError(f"expected {orbits.n_reduced} reduced values, got shape {x_reduced.shape}")
    return x_reduced[orbits.element_orbit]


def orbit_reduce_grad(orbits: OrbitMap, g_full) -> np.ndarray:
    g_full = np.asarray(g_full, dtype=float)
    if g_full.shape != (orbits.n_elements,):
        raise FilterError(f"expected {orbits.n_elements} gradient values, got shape {g_full.shape}")
    return np.bincount(orbits.element_orbit, weights=g_full, minlength=orbits.n_reduced)
