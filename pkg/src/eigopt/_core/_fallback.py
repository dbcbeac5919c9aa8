"""Numpy implementations of the element kernels."""
import itertools

import numpy as np


def filter_offsets(cells, spacing, rmin):
    """Integer cell offsets within ``rmin`` and their centroid distances.

    Shared by both backends so mirrored neighbours get bit-identical
    distances whichever kernel builds the weights.
    """
    spacing = np.asarray(spacing, dtype=np.float64)
    reach = [int(np.ceil(rmin / h)) for h in spacing]
    offs, dist = [], []
    for off in itertools.product(*(range(-r, r + 1) for r in reach)):
        d = float(np.sqrt(np.sum((np.array(off) * spacing) ** 2)))
        if d < rmin:
            offs.append(off)
            dist.append(d)
    return np.array(offs, dtype=np.int64).reshape(-1, len(cells)), np.array(dist)


def filter_triplets(cells, spacing, volumes, rmin):
    """Cone-filter weights ``(rmin - d) * v_q`` between cells of a regular
    grid whose centroids are closer than ``rmin``.  Returns (rows, cols,
    values)."""
    cells = tuple(int(c) for c in cells)
    volumes = np.asarray(volumes, dtype=np.float64)
    dim = len(cells)
    index = np.indices(cells[::-1]).reshape(dim, -1)[::-1]  # x first
    elems = np.arange(index.shape[1])
    rows, cols, vals = [], [], []
    offs, dist = filter_offsets(cells, spacing, rmin)
    for off, d in zip(offs, dist):
        target = index + off[:, None]
        valid = np.all((target >= 0) & (target < np.array(cells)[:, None]), axis=0)
        q = np.ravel_multi_index(tuple(target[:, valid][::-1]), cells[::-1])
        rows.append(elems[valid])
        cols.append(q)
        vals.append((rmin - d) * volumes[q])
    return (np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64),
            np.concatenate(vals))


def element_energies(ue, mat):
    """Quadratic forms ``ue[k, e] @ mat @ ue[k, e]``.

    ``ue`` has shape (n_vec, n_ele, n_edof); result is (n_vec, n_ele).
    """
    return np.einsum("kei,ij,kej->ke", ue, mat, ue, optimize=True)
