"""Numpy implementations of the hot kernels.

This is the fallback used when the compiled extension is unavailable (or
when ``BLOCKCAST_PURE_PYTHON`` is set). Every function here must produce
results identical to its compiled twin in ``_ckernels``.
"""

import numpy as np


def im2col(x, kh, kw, sh, sw, ph, pw):
    """Unfold (N,C,H,W) into conv patches of shape (N*OH*OW, C*kh*kw)."""
    n, c, h, w = x.shape
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]  # (N, C, OH, OW, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, n, c, h, w, kh, kw, sh, sw, ph, pw):
    """Scatter-add conv patches back onto an (N,C,H,W) gradient."""
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    hp, wp = h + 2 * ph, w + 2 * pw
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols6 = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += cols6[:, :, i, j]
    if ph or pw:
        out = out[:, :, ph : ph + h, pw : pw + w]
    return np.ascontiguousarray(out)


def knn_mean_dists(points, k):
    """Mean Euclidean distance from each point to its k nearest neighbors.

    The point itself is excluded. Caller guarantees len(points) > k.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    out = np.empty(n, dtype=np.float64)
    sq = np.sum(pts * pts, axis=1)
    block = max(1, int(2e6) // max(n, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (pts[start:stop] @ pts.T)
        np.maximum(d2, 0.0, out=d2)
        rows = np.arange(stop - start)
        d2[rows, np.arange(start, stop)] = np.inf  # exclude self
        part = np.partition(d2, k - 1, axis=1)[:, :k]
        out[start:stop] = np.sqrt(part).mean(axis=1)
    return out


def _radius_neighbors(pts, eps):
    """Neighbor lists (including self) within eps, as a list of index arrays."""
    n = len(pts)
    sq = np.sum(pts * pts, axis=1)
    eps2 = eps * eps
    neigh = []
    block = max(1, int(2e6) // max(n, 1))
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (pts[start:stop] @ pts.T)
        for i in range(stop - start):
            neigh.append(np.nonzero(d2[i] <= eps2)[0])
    return neigh


def dbscan_labels(points, eps, min_samples):
    """Density-based clustering; returns one label per point, noise = -1.

    Neighborhoods use distance <= eps and include the point itself.
    Cluster ids are assigned in order of first discovery (scan order), so
    results are deterministic and match the compiled kernel exactly.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    neigh = _radius_neighbors(pts, eps)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for p in range(n):
        if visited[p]:
            continue
        visited[p] = True
        if len(neigh[p]) < min_samples:
            continue  # stays noise unless claimed as a border point later
        labels[p] = cluster
        stack = list(neigh[p])
        while stack:
            q = stack.pop()
            if labels[q] == -1:
                labels[q] = cluster
            if visited[q]:
                continue
            visited[q] = True
            if len(neigh[q]) >= min_samples:
                stack.extend(neigh[q])
        cluster += 1
    return labels


def bev_scatter(cells, z, n_cells):
    """Per-cell count, max(z), sum(z), sum(z^2) for flat cell indices."""
    cells = np.asarray(cells, dtype=np.int64)
    z = np.asarray(z, dtype=np.float64)
    count = np.bincount(cells, minlength=n_cells).astype(np.int64)
    zmax = np.full(n_cells, -np.inf, dtype=np.float64)
    np.maximum.at(zmax, cells, z)
    zsum = np.bincount(cells, weights=z, minlength=n_cells)
    zsumsq = np.bincount(cells, weights=z * z, minlength=n_cells)
    return count, zmax, zsum, zsumsq
