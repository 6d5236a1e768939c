# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_fallback.py`` (same signatures)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, ceil
from cython cimport floating

cnp.import_array()


def im2col3d(floating[:, :, :, :, ::1] xp, ksize, stride, out_sp):
    cdef Py_ssize_t B = xp.shape[0], C = xp.shape[1]
    cdef Py_ssize_t kw = ksize[0], kh = ksize[1], kd = ksize[2]
    cdef Py_ssize_t sw = stride[0], sh = stride[1], sd = stride[2]
    cdef Py_ssize_t Wo = out_sp[0], Ho = out_sp[1], Do = out_sp[2]
    cdef Py_ssize_t K = C * kw * kh * kd, S = Wo * Ho * Do
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((B, K, S), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t b, c, i, j, k, x, y, z, row, col
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kw):
                    for j in range(kh):
                        for k in range(kd):
                            row = ((c * kw + i) * kh + j) * kd + k
                            col = 0
                            for x in range(Wo):
                                for y in range(Ho):
                                    for z in range(Do):
                                        o[b, row, col] = xp[b, c, i + sw * x, j + sh * y, k + sd * z]
                                        col += 1
    return out


def col2im3d(floating[:, :, ::1] cols, padded_shape, ksize, stride, out_sp):
    cdef Py_ssize_t B = padded_shape[0], C = padded_shape[1]
    cdef Py_ssize_t kw = ksize[0], kh = ksize[1], kd = ksize[2]
    cdef Py_ssize_t sw = stride[0], sh = stride[1], sd = stride[2]
    cdef Py_ssize_t Wo = out_sp[0], Ho = out_sp[1], Do = out_sp[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros(tuple(padded_shape), dtype=dtype)
    cdef floating[:, :, :, :, ::1] o = out
    cdef Py_ssize_t b, c, i, j, k, x, y, z, row, col
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kw):
                    for j in range(kh):
                        for k in range(kd):
                            row = ((c * kw + i) * kh + j) * kd + k
                            col = 0
                            for x in range(Wo):
                                for y in range(Ho):
                                    for z in range(Do):
                                        o[b, c, i + sw * x, j + sh * y, k + sd * z] += cols[b, row, col]
                                        col += 1
    return out


def radius_neighbors_all(points, double radius):
    """Uniform-grid radius search; CSR rows sorted ascending."""
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    if n == 0:
        return np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    lo = np.asarray(p).min(axis=0)
    hi = np.asarray(p).max(axis=0)
    extent = float((hi - lo).max())
    cell_size = max(radius, extent / 256.0, 1e-12)
    dims = np.floor((hi - lo) / cell_size).astype(np.int64) + 1
    cells = np.floor((np.asarray(p) - lo) / cell_size).astype(np.int64)
    cells = np.minimum(cells, dims - 1)
    cid = (cells[:, 0] * dims[1] + cells[:, 1]) * dims[2] + cells[:, 2]
    order = np.argsort(cid, kind="stable").astype(np.int64)
    sorted_cid = cid[order]
    ncell = int(dims[0] * dims[1] * dims[2])
    start = np.searchsorted(sorted_cid, np.arange(ncell + 1)).astype(np.int64)

    cdef long long[:, ::1] cl = np.ascontiguousarray(cells)
    cdef long long[::1] st = start
    cdef long long[::1] od = order
    cdef long long dx = dims[0], dy = dims[1], dz = dims[2]
    cdef double r2 = radius * radius
    cdef Py_ssize_t i, a, b, c, q, t, j
    cdef long long ci, cj, ck, cell
    cdef double d0, d1, d2
    counts = np.zeros(n, dtype=np.int64)
    cdef long long[::1] cnt = counts
    # pass 1: count
    with nogil:
        for i in range(n):
            for a in range(-1, 2):
                ci = cl[i, 0] + a
                if ci < 0 or ci >= dx:
                    continue
                for b in range(-1, 2):
                    cj = cl[i, 1] + b
                    if cj < 0 or cj >= dy:
                        continue
                    for c in range(-1, 2):
                        ck = cl[i, 2] + c
                        if ck < 0 or ck >= dz:
                            continue
                        cell = (ci * dy + cj) * dz + ck
                        for t in range(st[cell], st[cell + 1]):
                            j = od[t]
                            d0 = p[i, 0] - p[j, 0]
                            d1 = p[i, 1] - p[j, 1]
                            d2 = p[i, 2] - p[j, 2]
                            if d0 * d0 + d1 * d1 + d2 * d2 <= r2:
                                cnt[i] += 1
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.empty(int(indptr[-1]), dtype=np.int64)
    cdef long long[::1] ip = indptr
    cdef long long[::1] ix = indices
    cdef long long pos
    with nogil:
        for i in range(n):
            pos = ip[i]
            for a in range(-1, 2):
                ci = cl[i, 0] + a
                if ci < 0 or ci >= dx:
                    continue
                for b in range(-1, 2):
                    cj = cl[i, 1] + b
                    if cj < 0 or cj >= dy:
                        continue
                    for c in range(-1, 2):
                        ck = cl[i, 2] + c
                        if ck < 0 or ck >= dz:
                            continue
                        cell = (ci * dy + cj) * dz + ck
                        for t in range(st[cell], st[cell + 1]):
                            j = od[t]
                            d0 = p[i, 0] - p[j, 0]
                            d1 = p[i, 1] - p[j, 1]
                            d2 = p[i, 2] - p[j, 2]
                            if d0 * d0 + d1 * d1 + d2 * d2 <= r2:
                                ix[pos] = j
                                pos += 1
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    perm = np.lexsort((indices, rows))
    return indptr, indices[perm]


def nearest_neighbor(a, b):
    cdef double[:, ::1] pa = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] pb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = pa.shape[0], m = pb.shape[0], i, j
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    cdef long long[::1] oi = idx
    cdef double[::1] od = dist
    cdef double best, d, e0, e1, e2
    cdef long long bj
    with nogil:
        for i in range(n):
            best = 1e300
            bj = 0
            for j in range(m):
                e0 = pa[i, 0] - pb[j, 0]
                e1 = pa[i, 1] - pb[j, 1]
                e2 = pa[i, 2] - pb[j, 2]
                d = e0 * e0 + e1 * e1 + e2 * e2
                if d < best:
                    best = d
                    bj = j
            oi[i] = bj
            od[i] = best
    return idx, dist


def sdv_splat(local, indptr, int grid_size, double radius, double sigma, double truncate):
    cdef double[:, ::1] q = np.ascontiguousarray(local, dtype=np.float64)
    cdef long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    cdef int W = grid_size
    out = np.zeros((n, W, W, W), dtype=np.float32)
    cdef float[:, :, :, ::1] o = out
    grid_np = np.zeros((W, W, W), dtype=np.float64)
    cdef double[:, :, ::1] g = grid_np
    cdef double edge = 2.0 * radius / W
    cdef double cut2 = (truncate * sigma) ** 2
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef int span = <int>ceil(truncate * sigma / edge) + 1
    if 2 * span + 1 > 64:
        raise ValueError("SDV kernel wider than 64 voxels; lower sigma or truncate")
    cdef Py_ssize_t c, t, x, y, z
    cdef int bi, bj, bk, i, j, k, a, b, e, na, nb, ne
    cdef double px, py, pz, d2, peak, cc, wxy
    # separable Gaussian: per-axis squared offsets and weights, products per voxel
    cdef double ex[64]
    cdef double ey[64]
    cdef double ez[64]
    cdef double wx[64]
    cdef double wy[64]
    cdef double wz[64]
    cdef int ix[64]
    cdef int iy[64]
    cdef int iz[64]
    with nogil:
        for c in range(n):
            for x in range(W):
                for y in range(W):
                    for z in range(W):
                        g[x, y, z] = 0.0
            for t in range(ip[c], ip[c + 1]):
                px = q[t, 0]
                py = q[t, 1]
                pz = q[t, 2]
                bi = <int>floor((px + radius) / edge)
                bj = <int>floor((py + radius) / edge)
                bk = <int>floor((pz + radius) / edge)
                na = 0
                for i in range(bi - span, bi + span + 1):
                    if i < 0 or i >= W:
                        continue
                    cc = -radius + edge * (i + 0.5) - px
                    if cc * cc > cut2:
                        continue
                    ix[na] = i
                    ex[na] = cc * cc
                    wx[na] = exp(-cc * cc * inv)
                    na = na + 1
                nb = 0
                for j in range(bj - span, bj + span + 1):
                    if j < 0 or j >= W:
                        continue
                    cc = -radius + edge * (j + 0.5) - py
                    if cc * cc > cut2:
                        continue
                    iy[nb] = j
                    ey[nb] = cc * cc
                    wy[nb] = exp(-cc * cc * inv)
                    nb = nb + 1
                ne = 0
                for k in range(bk - span, bk + span + 1):
                    if k < 0 or k >= W:
                        continue
                    cc = -radius + edge * (k + 0.5) - pz
                    if cc * cc > cut2:
                        continue
                    iz[ne] = k
                    ez[ne] = cc * cc
                    wz[ne] = exp(-cc * cc * inv)
                    ne = ne + 1
                for a in range(na):
                    for b in range(nb):
                        d2 = ex[a] + ey[b]
                        if d2 > cut2:
                            continue
                        wxy = wx[a] * wy[b]
                        for e in range(ne):
                            if d2 + ez[e] <= cut2:
                                g[ix[a], iy[b], iz[e]] += wxy * wz[e]
            peak = 0.0
            for x in range(W):
                for y in range(W):
                    for z in range(W):
                        if g[x, y, z] > peak:
                            peak = g[x, y, z]
            if peak > 0.0:
                for x in range(W):
                    for y in range(W):
                        for z in range(W):
                            o[c, x, y, z] = <float>(g[x, y, z] / peak)
    return out


def greedy_nms(points, scores, double radius, double threshold, valid):
    cdef double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    s_np = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[::1] s = s_np
    cdef Py_ssize_t n = p.shape[0]
    order_np = np.lexsort((np.arange(n), -s_np)).astype(np.int64)
    cdef long long[::1] order = order_np
    alive_np = np.ascontiguousarray(valid, dtype=np.uint8).copy()
    cdef unsigned char[::1] alive = alive_np
    kept_np = np.empty(n, dtype=np.int64)
    cdef long long[::1] kept = kept_np
    cdef Py_ssize_t t, j, nk = 0
    cdef long long i
    cdef double r2 = radius * radius, d0, d1, d2
    with nogil:
        for t in range(n):
            i = order[t]
            if not alive[i]:
                continue
            if s[i] < threshold:
                break
            kept[nk] = i
            nk += 1
            for j in range(n):
                if alive[j]:
                    d0 = p[j, 0] - p[i, 0]
                    d1 = p[j, 1] - p[i, 1]
                    d2 = p[j, 2] - p[i, 2]
                    if d0 * d0 + d1 * d1 + d2 * d2 <= r2:
                        alive[j] = 0
    return kept_np[:nk].copy()
