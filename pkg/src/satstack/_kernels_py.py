"""Pure numpy implementations of the hot kernels.

Used when the compiled extension (:mod:`satstack._kernels`) is unavailable
or explicitly disabled; both implementations are interchangeable and the
test suite checks them against each other.
"""

import numpy as np


def tps_kernel_matrix(ax, ay, bx, by):
    """Radial kernel matrix K[i, j] = r^2 * log(r) for r = |a_i - b_j|.

    The limit value at r = 0 is 0.  Inputs are 1-D coordinate arrays; the
    result has shape (len(a), len(b)).
    """
    dx = ax[:, None] - bx[None, :]
    dy = ay[:, None] - by[None, :]
    d2 = dx * dx + dy * dy
    out = np.zeros_like(d2)
    nz = d2 > 0.0
    # r^2 log r == 0.5 * d2 * log(d2)
    out[nz] = 0.5 * d2[nz] * np.log(d2[nz])
    return out


def idw_predict(px, py, pv, qx, qy, power, snap_dist):
    """Inverse-distance-weighted prediction at query points.

    A query closer than ``snap_dist`` to a data point returns that point's
    value exactly (first such point in input order wins).
    """
    n_q = qx.shape[0]
    out = np.empty(n_q, dtype=np.float64)
    snap2 = snap_dist * snap_dist
    # chunked to bound the (n_points x n_queries) temporary
    chunk = max(1, int(2_000_000 // max(1, px.shape[0])))
    for start in range(0, n_q, chunk):
        stop = min(n_q, start + chunk)
        dx = qx[start:stop, None] - px[None, :]
        dy = qy[start:stop, None] - py[None, :]
        d2 = dx * dx + dy * dy
        with np.errstate(divide="ignore", invalid="ignore"):
            w = d2 ** (-power / 2.0)
            vals = (w * pv[None, :]).sum(axis=1) / w.sum(axis=1)
        hit_q, hit_p = np.nonzero(d2 <= snap2)
        if hit_q.size:
            # keep the first data point per query
            first = np.full(stop - start, -1, dtype=np.int64)
            for q, p in zip(hit_q[::-1], hit_p[::-1]):
                first[q] = p
            hit = first >= 0
            vals[hit] = pv[first[hit]]
        out[start:stop] = vals
    return out


def label_components(mask):
    """8-connectivity connected-component labeling by union-find.

    ``mask`` is a 2-D uint8 array (1 = foreground).  Returns
    ``(labels, count)`` where labels is int32, 0 = background, and
    components are numbered 1..count in order of their first foreground
    cell in row-major scan order.
    """
    n_rows, n_cols = mask.shape
    labels = np.zeros((n_rows, n_cols), dtype=np.int32)
    parent = {}

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            # keep the smaller flat index as root: first-touch order
            if rx < ry:
                parent[ry] = rx
            else:
                parent[rx] = ry

    for r in range(n_rows):
        base = r * n_cols
        for c in range(n_cols):
            if not mask[r, c]:
                continue
            idx = base + c
            parent[idx] = idx
            if c > 0 and mask[r, c - 1]:
                union(idx, idx - 1)
            if r > 0:
                up = idx - n_cols
                if mask[r - 1, c]:
                    union(idx, up)
                if c > 0 and mask[r - 1, c - 1]:
                    union(idx, up - 1)
                if c + 1 < n_cols and mask[r - 1, c + 1]:
                    union(idx, up + 1)

    next_label = 1
    label_of_root = {}
    for r in range(n_rows):
        base = r * n_cols
        for c in range(n_cols):
            if not mask[r, c]:
                continue
            root = find(base + c)
            lab = label_of_root.get(root)
            if lab is None:
                lab = next_label
                label_of_root[root] = lab
                next_label += 1
            labels[r, c] = lab
    return labels, next_label - 1
