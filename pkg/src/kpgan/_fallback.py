"""Pure numpy versions of the hot kernels.

Signatures and results match ``_ckernels.pyx`` exactly; the compiled module is
preferred when it imports.
"""
import numpy as np


def im2col3d(xp, ksize, stride, out_sp):
    B, C = xp.shape[:2]
    kw, kh, kd = ksize
    sw, sh, sd = stride
    Wo, Ho, Do = out_sp
    cols = np.empty((B, C, kw, kh, kd, Wo, Ho, Do), dtype=xp.dtype)
    for i in range(kw):
        for j in range(kh):
            for k in range(kd):
                cols[:, :, i, j, k] = xp[:, :, i:i + sw * Wo:sw, j:j + sh * Ho:sh,
                                         k:k + sd * Do:sd]
    return cols.reshape(B, C * kw * kh * kd, Wo * Ho * Do)


def col2im3d(cols, padded_shape, ksize, stride, out_sp):
    B, C = padded_shape[:2]
    kw, kh, kd = ksize
    sw, sh, sd = stride
    Wo, Ho, Do = out_sp
    out = np.zeros(padded_shape, dtype=cols.dtype)
    cols = cols.reshape(B, C, kw, kh, kd, Wo, Ho, Do)
    for i in range(kw):
        for j in range(kh):
            for k in range(kd):
                out[:, :, i:i + sw * Wo:sw, j:j + sh * Ho:sh, k:k + sd * Do:sd] += cols[:, :, i, j, k]
    return out


def radius_neighbors_all(points, radius):
    """CSR (indptr, indices) of all j with |p_j - p_i| <= radius, ascending per row."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    r2 = radius * radius
    indptr = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    block = 512
    for start in range(0, n, block):
        stop = min(n, start + block)
        d2 = ((points[start:stop, None, :] - points[None, :, :]) ** 2).sum(-1)
        rows, cols = np.nonzero(d2 <= r2)
        counts = np.bincount(rows, minlength=stop - start)
        indptr[start + 1:stop + 1] = counts
        chunks.append(cols)
    np.cumsum(indptr, out=indptr)
    indices = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int64)
    return indptr, indices.astype(np.int64)


def nearest_neighbor(a, b):
    """For each row of ``a``: (index, squared distance) of the nearest row of ``b``.

    Ties go to the lower index.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    idx = np.empty(len(a), dtype=np.int64)
    d2 = np.empty(len(a), dtype=np.float64)
    block = 1024
    for start in range(0, len(a), block):
        blk = a[start:start + block]
        dist = ((blk[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        j = np.argmin(dist, axis=1)
        idx[start:start + block] = j
        d2[start:start + block] = dist[np.arange(len(blk)), j]
    return idx, d2


def sdv_splat(local, indptr, grid_size, radius, sigma, truncate):
    """Gaussian-splat LRF-local neighbour coordinates into per-centre density grids.

    ``local`` holds the neighbours of centre ``c`` in rows
    ``indptr[c]:indptr[c+1]``. Voxel centres tile [-radius, radius]^3.
    The result is max-normalised per centre (all-zero grids stay zero).
    """
    n = len(indptr) - 1
    W = grid_size
    edge = 2.0 * radius / W
    centers = -radius + edge * (np.arange(W) + 0.5)
    cut2 = (truncate * sigma) ** 2
    inv = 1.0 / (2.0 * sigma * sigma)
    out = np.zeros((n, W, W, W), dtype=np.float32)
    span = int(np.ceil(truncate * sigma / edge)) + 1
    offs = np.arange(-span, span + 1)
    for c in range(n):
        pts = local[indptr[c]:indptr[c + 1]]
        if len(pts) == 0:
            continue
        base = np.floor((pts + radius) / edge).astype(np.int64)           # (m, 3)
        gi = base[:, 0:1] + offs                                             # (m, s)
        gj = base[:, 1:2] + offs
        gk = base[:, 2:3] + offs
        dx = (centers[np.clip(gi, 0, W - 1)] - pts[:, 0:1]) ** 2
        dy = (centers[np.clip(gj, 0, W - 1)] - pts[:, 1:2]) ** 2
        dz = (centers[np.clip(gk, 0, W - 1)] - pts[:, 2:3]) ** 2
        vi = (gi >= 0) & (gi < W)
        vj = (gj >= 0) & (gj < W)
        vk = (gk >= 0) & (gk < W)
        d2 = dx[:, :, None, None] + dy[:, None, :, None] + dz[:, None, None, :]
        ok = vi[:, :, None, None] & vj[:, None, :, None] & vk[:, None, None, :] & (d2 <= cut2)
        w = np.where(ok, np.exp(-d2 * inv), 0.0)
        flat = (np.clip(gi, 0, W - 1)[:, :, None, None] * W * W
                + np.clip(gj, 0, W - 1)[:, None, :, None] * W
                + np.clip(gk, 0, W - 1)[:, None, None, :])
        grid = np.bincount(flat[ok], weights=w[ok], minlength=W * W * W)
        peak = grid.max()
        if peak > 0:
            grid = grid / peak
        out[c] = grid.reshape(W, W, W)
    return out


def greedy_nms(points, scores, radius, threshold, valid):
    """Greedy suppression in descending score order, lower index first on ties."""
    points = np.asarray(points, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    n = len(points)
    order = np.lexsort((np.arange(n), -scores))
    alive = np.asarray(valid, dtype=bool).copy()
    r2 = radius * radius
    kept = []
    for i in order:
        if not alive[i]:
            continue
        if scores[i] < threshold:
            break
        kept.append(i)
        d2 = ((points - points[i]) ** 2).sum(-1)
        alive &= d2 > r2
    return np.asarray(kept, dtype=np.int64)
