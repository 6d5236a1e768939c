import numpy as np

from .. import kernels

NMS_RADIUS = 0.1


def nms(points, scores, radius: float = NMS_RADIUS, threshold: float = -np.inf,
        valid=None) -> np.ndarray:
    """Greedy non-maximum suppression.

    Repeatedly keeps the best remaining point (score >= ``threshold``, ties to
    the lower index) and suppresses everything within ``radius`` of it.
    Returned indices are in descending score order.
    """
    if radius <= 0:
        raise ValueError("NMS radius must be positive")
    points = points.points if hasattr(points, "points") else np.asarray(points, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if valid is None:
        valid = np.ones(len(points), dtype=bool)
    return kernels.greedy_nms(points, scores, float(radius), float(threshold),
                              np.asarray(valid, dtype=bool))
