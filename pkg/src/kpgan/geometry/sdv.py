"""Smoothed-density voxel grids in each point's local reference frame.

Neighbours within the LRF radius are expressed in frame coordinates and
splatted with a truncated isotropic Gaussian into a W^3 grid spanning
[-r, r]^3, then max-normalised to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .lrf import LRF_RADIUS, estimate_lrfs
from .neighbors import radius_neighbors, radius_neighbors_all

GRID_SIZE = 16
SIGMA_SCALE = 0.75        # Gaussian sigma in voxel edges
TRUNCATE = 3.0            # kernel cut-off in sigmas


@dataclass
class SdvDescriptor:
    grid: np.ndarray      # (W, W, W), axes follow the frame's x, y, z
    center: int


def kernel_sigma(r, grid_size):
    return SIGMA_SCALE * 2.0 * r / grid_size


def compute_sdv(pc, center: int, lrf, r: float = LRF_RADIUS,
                grid_size: int = GRID_SIZE) -> SdvDescriptor:
    pts = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)
    nb = radius_neighbors(pts, center, r)
    local = (pts[nb] - pts[center]) @ lrf.rotation
    indptr = np.array([0, len(nb)], dtype=np.int64)
    grid = kernels.sdv_splat(local, indptr, grid_size, r, kernel_sigma(r, grid_size), TRUNCATE)
    return SdvDescriptor(grid[0], center)


def compute_sdv_all(points, r: float = LRF_RADIUS, grid_size: int = GRID_SIZE,
                    centers=None):
    """SDV grids for all points (or ``centers``).

    Returns ``(grids (M, W, W, W) float32, valid (M,) bool)``; centres with a
    degenerate frame get an all-zero grid and ``valid = False``.
    """
    points = np.asarray(points, dtype=np.float64)
    indptr, indices = radius_neighbors_all(points, r)
    rot, valid = estimate_lrfs(points, r, (indptr, indices))
    if centers is not None:
        centers = np.asarray(centers, dtype=np.int64)
        starts, stops = indptr[centers], indptr[centers + 1]
        counts = stops - starts
        indices = np.concatenate([indices[a:b] for a, b in zip(starts, stops)]) \
            if len(centers) else np.zeros(0, dtype=np.int64)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        rot, valid = rot[centers], valid[centers]
        owner = centers
    else:
        owner = np.arange(len(points))
    counts = np.diff(indptr)
    # degenerate centres contribute no neighbours
    keep = np.repeat(valid, counts)
    rows = np.repeat(np.arange(len(counts)), counts)[keep]
    idx = indices[keep]
    local = np.einsum("mi,mij->mj", points[idx] - points[owner[rows]], rot[rows])
    new_counts = np.bincount(rows, minlength=len(counts))
    new_ptr = np.concatenate([[0], np.cumsum(new_counts)]).astype(np.int64)
    grids = kernels.sdv_splat(local, new_ptr, grid_size, r,
                              kernel_sigma(r, grid_size), TRUNCATE)
    return grids, valid
