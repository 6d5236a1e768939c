import numpy as np

from .. import kernels


def reflect(points, plane):
    normal, offset = plane
    normal = np.asarray(normal, dtype=np.float64)
    d = points @ normal - offset
    return points - 2.0 * d[:, None] * normal[None, :]


def symmetric_pairs(pc, plane=None, tol: float = 0.01):
    """Mirror-mate pairs ``(i, j)``, i < j, each listed once.

    Every point is reflected across ``plane`` and matched to its nearest
    point; the pair is kept when that distance is at most ``tol``. Points that
    match themselves (on the plane) are skipped.
    """
    if plane is None:
        plane = pc.symmetry_plane
    if plane is None:
        raise ValueError("no symmetry plane given")
    pts = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)
    mirrored = reflect(pts, plane)
    idx, d2 = kernels.nearest_neighbor(mirrored, pts)
    pairs = set()
    for i, (j, dd) in enumerate(zip(idx, d2)):
        if j != i and dd <= tol * tol:
            pairs.add((min(i, int(j)), max(i, int(j))))
    return sorted(pairs)
