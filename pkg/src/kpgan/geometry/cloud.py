"""Point cloud container and normalisation."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass
class PointCloud:
    """N x 3 points with optional per-point annotations.

    ``symmetry_plane`` is ``(normal, offset)`` for the plane ``normal . x = offset``.
    """
    points: np.ndarray
    part_labels: np.ndarray | None = None
    gt_keypoints: np.ndarray | None = None
    correspondence_ids: np.ndarray | None = None
    symmetry_plane: tuple | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        if n < 1:
            raise GeometryError("point cloud is empty")
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("point cloud has non-finite coordinates")
        for attr in ("part_labels", "correspondence_ids"):
            val = getattr(self, attr)
            if val is not None:
                val = np.asarray(val, dtype=np.int64).reshape(-1)
                if len(val) != n:
                    raise GeometryError(f"{attr} has {len(val)} entries for {n} points")
                setattr(self, attr, val)
        if self.gt_keypoints is not None:
            kp = np.asarray(self.gt_keypoints, dtype=np.int64).reshape(-1)
            if kp.size and (kp.min() < 0 or kp.max() >= n):
                raise GeometryError("gt_keypoints index out of range")
            self.gt_keypoints = kp
        if self.symmetry_plane is not None:
            normal, offset = self.symmetry_plane
            normal = np.asarray(normal, dtype=np.float64).reshape(3)
            norm = np.linalg.norm(normal)
            if norm == 0:
                raise GeometryError("symmetry plane normal is zero")
            self.symmetry_plane = (normal / norm, float(offset) / norm)

    def __len__(self):
        return len(self.points)

    def with_points(self, points):
        return replace(self, points=points)

    def subset(self, idx) -> "PointCloud":
        """Points ``idx`` with labels carried along; keypoints are dropped."""
        idx = np.asarray(idx, dtype=np.int64)
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return PointCloud(self.points[idx], pick(self.part_labels), None,
                          pick(self.correspondence_ids), self.symmetry_plane, self.name)


def normalize_cloud(pc: PointCloud) -> PointCloud:
    """Centre on the centroid and scale the bounding sphere to diameter 2."""
    if len(pc) < 2:
        raise GeometryError("normalize_cloud needs at least two points")
    centroid = pc.points.mean(axis=0)
    centred = pc.points - centroid
    radius = np.sqrt((centred ** 2).sum(axis=1).max())
    if radius <= 0:
        raise GeometryError("degenerate cloud: all points coincide")
    scale = 1.0 / radius
    plane = None
    if pc.symmetry_plane is not None:
        normal, offset = pc.symmetry_plane
        plane = (normal, scale * (offset - float(normal @ centroid)))
    return replace(pc, points=centred * scale, symmetry_plane=plane)
