# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels. Must match _pykernels results exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, floor, sqrt

cnp.import_array()


def im2col(cnp.ndarray x_in, int kh, int kw, int sh, int sw, int ph, int pw):
    """Unfold (N,C,H,W) into conv patches of shape (N*OH*OW, C*kh*kw)."""
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t ow = (w + 2 * pw - kw) // sw + 1
    out_arr = np.empty((n * oh * ow, c * kh * kw), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, oy, ox, ch, ky, kx, row, col, iy, ix
    with nogil:
        for i in range(n):
            for oy in range(oh):
                for ox in range(ow):
                    row = (i * oh + oy) * ow + ox
                    col = 0
                    for ch in range(c):
                        for ky in range(kh):
                            iy = oy * sh + ky - ph
                            for kx in range(kw):
                                ix = ox * sw + kx - pw
                                if 0 <= iy < h and 0 <= ix < w:
                                    out[row, col] = x[i, ch, iy, ix]
                                else:
                                    out[row, col] = 0.0
                                col += 1
    return out_arr


def col2im(cnp.ndarray cols_in, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h,
           Py_ssize_t w, int kh, int kw, int sh, int sw, int ph, int pw):
    """Accumulate conv patches back onto an (N,C,H,W) gradient.

    Gather formulation: each input position sums the patch entries that
    cover it, so writes stay sequential.
    """
    cdef double[:, ::1] cols = np.ascontiguousarray(cols_in, dtype=np.float64)
    cdef Py_ssize_t oh = (h + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t ow = (w + 2 * pw - kw) // sw + 1
    out_arr = np.empty((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr

    # per input row/col: which (output index, kernel offset) pairs cover it
    cdef long long[:, ::1] pairs_y = np.empty((h, kh * 2), dtype=np.int64)
    cdef long long[::1] npairs_y = np.zeros(h, dtype=np.int64)
    cdef long long[:, ::1] pairs_x = np.empty((w, kw * 2), dtype=np.int64)
    cdef long long[::1] npairs_x = np.zeros(w, dtype=np.int64)
    cdef Py_ssize_t iy, ix, oy, ox, ky, kx, i, ch, a, b, row_base, col_base
    cdef double s
    for oy in range(oh):
        for ky in range(kh):
            iy = oy * sh + ky - ph
            if 0 <= iy < h:
                pairs_y[iy, npairs_y[iy] * 2] = oy
                pairs_y[iy, npairs_y[iy] * 2 + 1] = ky
                npairs_y[iy] += 1
    for ox in range(ow):
        for kx in range(kw):
            ix = ox * sw + kx - pw
            if 0 <= ix < w:
                pairs_x[ix, npairs_x[ix] * 2] = ox
                pairs_x[ix, npairs_x[ix] * 2 + 1] = kx
                npairs_x[ix] += 1
    with nogil:
        for i in range(n):
            for ch in range(c):
                for iy in range(h):
                    for ix in range(w):
                        s = 0.0
                        for a in range(npairs_y[iy]):
                            row_base = (i * oh + pairs_y[iy, a * 2]) * ow
                            col_base = (ch * kh + pairs_y[iy, a * 2 + 1]) * kw
                            for b in range(npairs_x[ix]):
                                s += cols[row_base + pairs_x[ix, b * 2],
                                          col_base + pairs_x[ix, b * 2 + 1]]
                        out[i, ch, iy, ix] = s
    return out_arr


def knn_mean_dists(cnp.ndarray points, int k):
    """Mean distance to the k nearest neighbors (self excluded).

    Sort-sweep: points ordered by x, each query expands left/right until
    the x gap alone exceeds the current k-th best distance.
    """
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    order_arr = np.argsort(points[:, 0], kind="stable").astype(np.int64)
    cdef long long[::1] order = order_arr
    cdef double[:, ::1] sorted_pts = np.ascontiguousarray(points[order_arr],
                                                          dtype=np.float64)
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    best_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] best = best_arr
    cdef Py_ssize_t i, j, m, worst, left, right
    cdef double dx, dy, dz, d2, s, worst_d2
    cdef bint go_left, go_right
    with nogil:
        for i in range(n):
            for m in range(k):
                best[m] = INFINITY
            worst = 0
            worst_d2 = INFINITY
            left = i - 1
            right = i + 1
            while True:
                go_left = left >= 0
                go_right = right < n
                if go_left and (not go_right or
                                sorted_pts[i, 0] - sorted_pts[left, 0]
                                <= sorted_pts[right, 0] - sorted_pts[i, 0]):
                    j = left
                    left -= 1
                elif go_right:
                    j = right
                    right += 1
                else:
                    break
                dx = sorted_pts[i, 0] - sorted_pts[j, 0]
                if dx * dx > worst_d2:
                    # every remaining point on this side is farther in x
                    if j < i:
                        left = -1
                    else:
                        right = n
                    continue
                dy = sorted_pts[i, 1] - sorted_pts[j, 1]
                dz = sorted_pts[i, 2] - sorted_pts[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < worst_d2:
                    best[worst] = d2
                    worst = 0
                    for m in range(1, k):
                        if best[m] > best[worst]:
                            worst = m
                    worst_d2 = best[worst]
            s = 0.0
            for m in range(k):
                s += sqrt(best[m])
            out[order[i]] = s / k
    return out_arr


cdef inline long long _cell_key(double v, double inv_eps, long long off) nogil:
    return <long long> floor(v * inv_eps) + off


def dbscan_labels(cnp.ndarray points, double eps, int min_samples):
    """Grid-accelerated DBSCAN; identical labels to the numpy fallback."""
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    labels_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    if n == 0:
        return labels_arr

    # Pack grid cell coords (cell size = eps) into a sortable 64-bit key.
    cdef double inv_eps = 1.0 / eps
    cdef long long OFF = 1 << 20
    keys_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] keys = keys_arr
    cdef Py_ssize_t i
    for i in range(n):
        keys[i] = ((_cell_key(pts[i, 0], inv_eps, OFF) << 42)
                   | (_cell_key(pts[i, 1], inv_eps, OFF) << 21)
                   | _cell_key(pts[i, 2], inv_eps, OFF))
    order_arr = np.argsort(keys_arr, kind="stable").astype(np.int64)
    cdef long long[::1] order = order_arr
    sorted_keys_arr = keys_arr[order_arr]
    cdef long long[::1] skeys = sorted_keys_arr

    cdef double eps2 = eps * eps
    cdef long long[::1] nbr_count = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t pass_no, j, lo, hi, mid, start
    cdef long long key, kx, ky, kz, dxc, dyc, dzc
    cdef double dx, dy, dz
    cdef long long[::1] indptr = np.zeros(n + 1, dtype=np.int64)
    cdef long long[::1] indices = None
    indices_arr = None

    for pass_no in range(2):
        if pass_no == 1:
            for i in range(n):
                indptr[i + 1] = indptr[i] + nbr_count[i]
            indices_arr = np.empty(indptr[n], dtype=np.int64)
            indices = indices_arr
            for i in range(n):
                nbr_count[i] = 0
        for i in range(n):
            kx = _cell_key(pts[i, 0], inv_eps, OFF)
            ky = _cell_key(pts[i, 1], inv_eps, OFF)
            kz = _cell_key(pts[i, 2], inv_eps, OFF)
            for dxc in range(-1, 2):
                for dyc in range(-1, 2):
                    for dzc in range(-1, 2):
                        key = (((kx + dxc) << 42) | ((ky + dyc) << 21)
                               | (kz + dzc))
                        # binary search for the first occurrence of key
                        lo = 0
                        hi = n
                        while lo < hi:
                            mid = (lo + hi) >> 1
                            if skeys[mid] < key:
                                lo = mid + 1
                            else:
                                hi = mid
                        start = lo
                        while start < n and skeys[start] == key:
                            j = order[start]
                            dx = pts[i, 0] - pts[j, 0]
                            dy = pts[i, 1] - pts[j, 1]
                            dz = pts[i, 2] - pts[j, 2]
                            if dx * dx + dy * dy + dz * dz <= eps2:
                                if pass_no == 1:
                                    indices[indptr[i] + nbr_count[i]] = j
                                nbr_count[i] += 1
                            start += 1

    # Classic expansion: first-created cluster claims border points.
    cdef char[::1] visited = np.zeros(n, dtype=np.int8)
    cdef long long[::1] stack = np.empty(indptr[n] if indptr[n] > n else n,
                                         dtype=np.int64)
    cdef Py_ssize_t top, q, cluster = 0
    cdef long long t
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = 1
        if indptr[i + 1] - indptr[i] < min_samples:
            continue
        labels[i] = cluster
        top = 0
        for t in range(indptr[i], indptr[i + 1]):
            stack[top] = indices[t]
            top += 1
        while top > 0:
            top -= 1
            q = stack[top]
            if labels[q] == -1:
                labels[q] = cluster
            if visited[q]:
                continue
            visited[q] = 1
            if indptr[q + 1] - indptr[q] >= min_samples:
                # each point's list is pushed at most once, so the stack
                # never exceeds the total neighbor count
                for t in range(indptr[q], indptr[q + 1]):
                    stack[top] = indices[t]
                    top += 1
        cluster += 1
    return labels_arr


def bev_scatter(cnp.ndarray cells_in, cnp.ndarray z_in, Py_ssize_t n_cells):
    """Per-cell count, max(z), sum(z), sum(z^2) for flat cell indices."""
    cdef long long[::1] cells = np.ascontiguousarray(cells_in, dtype=np.int64)
    cdef double[::1] z = np.ascontiguousarray(z_in, dtype=np.float64)
    count_arr = np.zeros(n_cells, dtype=np.int64)
    zmax_arr = np.full(n_cells, -INFINITY, dtype=np.float64)
    zsum_arr = np.zeros(n_cells, dtype=np.float64)
    zsumsq_arr = np.zeros(n_cells, dtype=np.float64)
    cdef long long[::1] count = count_arr
    cdef double[::1] zmax = zmax_arr, zsum = zsum_arr, zsumsq = zsumsq_arr
    cdef Py_ssize_t i, cidx
    with nogil:
        for i in range(cells.shape[0]):
            cidx = cells[i]
            count[cidx] += 1
            if z[i] > zmax[cidx]:
                zmax[cidx] = z[i]
            zsum[cidx] += z[i]
            zsumsq[cidx] += z[i] * z[i]
    return count_arr, zmax_arr, zsum_arr, zsumsq_arr
