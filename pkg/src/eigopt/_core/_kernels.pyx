# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels; same contracts as ``_fallback``."""
import numpy as np

from ._fallback import filter_offsets


def filter_triplets(cells, spacing, volumes, double rmin):
    """Cone-filter weights ``(rmin - d) * v_q`` for centroids closer than
    ``rmin``; returns (rows, cols, values)."""
    cdef long[:, ::1] offs
    cdef double[::1] dist
    offs_arr, dist_arr = filter_offsets(cells, spacing, rmin)
    offs = np.ascontiguousarray(offs_arr, dtype=np.int64)
    dist = np.ascontiguousarray(dist_arr, dtype=np.float64)
    cdef double[::1] vol = np.ascontiguousarray(volumes, dtype=np.float64)
    cdef int dim = len(cells)
    cdef long nx = cells[0]
    cdef long ny = cells[1]
    cdef long nz = cells[2] if dim == 3 else 1
    cdef long ne = nx * ny * nz
    cdef long no = offs.shape[0]
    cdef long cap = ne * no
    rows_arr = np.empty(cap, dtype=np.int64)
    cols_arr = np.empty(cap, dtype=np.int64)
    vals_arr = np.empty(cap, dtype=np.float64)
    cdef long[::1] rows = rows_arr
    cdef long[::1] cols = cols_arr
    cdef double[::1] vals = vals_arr
    cdef long k = 0, o, i, j, l, ti, tj, tl, p, q
    for o in range(no):
        for l in range(nz):
            tl = l + (offs[o, 2] if dim == 3 else 0)
            if tl < 0 or tl >= nz:
                continue
            for j in range(ny):
                tj = j + offs[o, 1]
                if tj < 0 or tj >= ny:
                    continue
                for i in range(nx):
                    ti = i + offs[o, 0]
                    if ti < 0 or ti >= nx:
                        continue
                    p = (l * ny + j) * nx + i
                    q = (tl * ny + tj) * nx + ti
                    rows[k] = p
                    cols[k] = q
                    vals[k] = (rmin - dist[o]) * vol[q]
                    k += 1
    return rows_arr[:k], cols_arr[:k], vals_arr[:k]


def element_energies(ue, mat):
    """Quadratic forms ``ue[k, e] @ mat @ ue[k, e]``, shape (n_vec, n_ele).

    ``mat`` must be symmetric; only its upper triangle is read.
    """
    cdef double[:, :, ::1] u = np.ascontiguousarray(ue, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(mat, dtype=np.float64)
    cdef Py_ssize_t nk = u.shape[0], ne = u.shape[1], nd = u.shape[2]
    out_arr = np.empty((nk, ne), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t k, e, a, b
    cdef double s, t, ua
    cdef double* row
    for k in range(nk):
        for e in range(ne):
            row = &u[k, e, 0]
            s = 0.0
            for a in range(nd):
                ua = row[a]
                t = 0.5 * A[a, a] * ua
                for b in range(a + 1, nd):
                    t += A[a, b] * row[b]
                s += ua * t
            out[k, e] = 2.0 * s
    return out_arr
