"""Local reference frames from neighbourhood covariance.

Axes are the covariance eigenvectors: x along the largest eigenvalue, z along
the smallest. The sign of z (then x) is chosen so that most neighbours have a
positive coordinate along it, measured from the centre point. Offsets that
project to (numerically) zero abstain, including the centre itself; an exact
vote tie falls back to the sign of the summed coordinates. y = z cross x, so
frames are right-handed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .neighbors import radius_neighbors, radius_neighbors_all

log = logging.getLogger(__name__)

LRF_RADIUS = 0.3
MIN_EIG_RATIO = 1.02
MIN_NEIGHBORS = 4


class DegenerateLRFError(ValueError):
    """Neighbourhood covariance too isotropic (or too small) for stable axes."""


@dataclass
class LocalReferenceFrame:
    rotation: np.ndarray        # columns are the x, y, z axes
    origin: np.ndarray

    def to_local(self, points):
        return (np.asarray(points, dtype=np.float64) - self.origin) @ self.rotation


def _row_sums(values, indptr):
    csum = np.concatenate([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)])
    return csum[indptr[1:]] - csum[indptr[:-1]]


def _covariances(diffs, indptr):
    """Per-row covariance of neighbour offsets (rows are contiguous CSR blocks)."""
    counts = np.diff(indptr)
    safe = np.maximum(counts, 1)
    mean = _row_sums(diffs, indptr) / safe[:, None]
    outer = _row_sums((diffs[:, :, None] * diffs[:, None, :]).reshape(-1, 9), indptr)
    outer = outer.reshape(-1, 3, 3) / safe[:, None, None]
    return outer - mean[:, :, None] * mean[:, None, :], counts


def _orient(axis, diffs, rows, n):
    """Flip per-row axes so most neighbour offsets project positively."""
    proj = np.einsum("mi,mi->m", diffs, axis[rows])
    # abstain band keeps the vote antisymmetric under rounding noise
    tol = 1e-9 * np.sqrt(np.einsum("mi,mi->m", diffs, diffs))
    pos = np.bincount(rows, weights=(proj > tol).astype(np.float64), minlength=n)
    neg = np.bincount(rows, weights=(proj < -tol).astype(np.float64), minlength=n)
    total = np.bincount(rows, weights=proj, minlength=n)
    flip = (neg > pos) | ((neg == pos) & (total < 0))
    axis[flip] *= -1.0
    return axis


def _frames(points, indptr, indices, centers):
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(len(counts)), counts)
    diffs = points[indices] - points[centers[rows]]
    cov, counts = _covariances(diffs, indptr)
    evals, evecs = np.linalg.eigh(cov)               # ascending
    small, mid, large = evals[:, 0], evals[:, 1], evals[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        valid = ((counts >= MIN_NEIGHBORS)
                 & (mid > 1e-12 * np.maximum(large, 1e-300))
                 & (large >= MIN_EIG_RATIO * mid)
                 & (mid >= MIN_EIG_RATIO * small))
    z = _orient(evecs[:, :, 0].copy(), diffs, rows, len(counts))
    x = _orient(evecs[:, :, 2].copy(), diffs, rows, len(counts))
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=2), valid


def estimate_lrfs(points, r: float = LRF_RADIUS, neighborhoods=None):
    """Frames for every point.

    Returns ``(rotations (N,3,3), valid (N,) bool)``. Degenerate points get
    the identity rotation and ``valid = False``.
    """
    points = np.asarray(points, dtype=np.float64)
    if neighborhoods is None:
        neighborhoods = radius_neighbors_all(points, r)
    indptr, indices = neighborhoods
    rot, valid = _frames(points, indptr, indices, np.arange(len(points)))
    rot[~valid] = np.eye(3)
    if not valid.all():
        log.debug("%d of %d frames degenerate; identity substituted",
                  int((~valid).sum()), len(valid))
    return rot, valid


def estimate_lrf(pc, center: int, r: float = LRF_RADIUS) -> LocalReferenceFrame:
    """Frame at one point; raises ``DegenerateLRFError`` on unstable covariance."""
    pts = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)
    nb = radius_neighbors(pts, center, r)
    indptr = np.array([0, len(nb)], dtype=np.int64)
    rot, valid = _frames(pts, indptr, nb, np.array([center]))
    if not valid[0]:
        raise DegenerateLRFError(
            f"point {center}: {len(nb)} neighbours within r={r} give a near-isotropic "
            "or collinear covariance")
    return LocalReferenceFrame(rot[0], pts[center].copy())
