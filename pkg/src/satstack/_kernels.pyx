# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: TPS kernel matrix, IDW prediction, CCL.

Mirrors satstack._kernels_py; the two must stay behaviorally identical.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, pow

cnp.import_array()


def tps_kernel_matrix(double[::1] ax, double[::1] ay,
                      double[::1] bx, double[::1] by):
    """K[i, j] = r^2 log r for r = |a_i - b_j|, with K = 0 at r = 0."""
    cdef Py_ssize_t n = ax.shape[0]
    cdef Py_ssize_t m = bx.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, d2
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            dx = ax[i] - bx[j]
            dy = ay[i] - by[j]
            d2 = dx * dx + dy * dy
            if d2 > 0.0:
                out[i, j] = 0.5 * d2 * log(d2)
            else:
                out[i, j] = 0.0
    return out_arr


def idw_predict(double[::1] px, double[::1] py, double[::1] pv,
                double[::1] qx, double[::1] qy,
                double power, double snap_dist):
    """Inverse-distance weights d^-power; exact hits within snap_dist."""
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t m = qx.shape[0]
    cdef Py_ssize_t i, j, hit
    cdef double dx, dy, d2, w, wsum, vsum, snap2, half_p
    snap2 = snap_dist * snap_dist
    half_p = power / 2.0
    out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(m):
        wsum = 0.0
        vsum = 0.0
        hit = -1
        for j in range(n):
            dx = qx[i] - px[j]
            dy = qy[i] - py[j]
            d2 = dx * dx + dy * dy
            if d2 <= snap2:
                hit = j
                break
            w = pow(d2, -half_p)
            wsum += w
            vsum += w * pv[j]
        if hit >= 0:
            out[i] = pv[hit]
        else:
            out[i] = vsum / wsum
    return out_arr


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t x) noexcept:
    cdef Py_ssize_t root = x
    cdef Py_ssize_t nxt
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


cdef void _union(Py_ssize_t[::1] parent, Py_ssize_t x, Py_ssize_t y) noexcept:
    cdef Py_ssize_t rx = _find(parent, x)
    cdef Py_ssize_t ry = _find(parent, y)
    if rx != ry:
        if rx < ry:
            parent[ry] = rx
        else:
            parent[rx] = ry


def label_components(const unsigned char[:, ::1] mask):
    """8-connectivity union-find labeling, first-touch row-major numbering."""
    cdef Py_ssize_t n_rows = mask.shape[0]
    cdef Py_ssize_t n_cols = mask.shape[1]
    cdef Py_ssize_t r, c, idx, up, root, count
    parent_arr = np.full(n_rows * n_cols, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    labels_arr = np.zeros((n_rows, n_cols), dtype=np.int32)
    cdef int[:, ::1] labels = labels_arr
    label_of_root_arr = np.zeros(n_rows * n_cols, dtype=np.int32)
    cdef int[::1] label_of_root = label_of_root_arr

    for r in range(n_rows):
        for c in range(n_cols):
            if mask[r, c] == 0:
                continue
            idx = r * n_cols + c
            parent[idx] = idx
            if c > 0 and mask[r, c - 1]:
                _union(parent, idx, idx - 1)
            if r > 0:
                up = idx - n_cols
                if mask[r - 1, c]:
                    _union(parent, idx, up)
                if c > 0 and mask[r - 1, c - 1]:
                    _union(parent, idx, up - 1)
                if c + 1 < n_cols and mask[r - 1, c + 1]:
                    _union(parent, idx, up + 1)

    count = 0
    for r in range(n_rows):
        for c in range(n_cols):
            if mask[r, c] == 0:
                continue
            root = _find(parent, r * n_cols + c)
            if label_of_root[root] == 0:
                count += 1
                label_of_root[root] = <int> count
            labels[r, c] = label_of_root[root]
    return labels_arr, int(count)
