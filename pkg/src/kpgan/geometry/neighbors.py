import numpy as np

from .. import kernels


def _points(pc):
    return pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)


def radius_neighbors(pc, center: int, r: float) -> np.ndarray:
    """Indices i with |x_i - x_center| <= r, centre included, ascending."""
    if r <= 0:
        raise ValueError("radius must be positive")
    pts = _points(pc)
    d2 = ((pts - pts[center]) ** 2).sum(axis=1)
    return np.flatnonzero(d2 <= r * r)


def radius_neighbors_all(pc, r: float):
    """CSR ``(indptr, indices)`` of every point's radius neighbourhood."""
    if r <= 0:
        raise ValueError("radius must be positive")
    return kernels.radius_neighbors_all(_points(pc), float(r))
