"""Keypoint detection with a trained model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import NMS_RADIUS, compute_sdv_all, nms


@dataclass
class DetectionResult:
    cloud_id: str
    keypoint_indices: np.ndarray
    scores: np.ndarray
    embeddings: np.ndarray | None = None
    saliency: np.ndarray | None = None
    valid: np.ndarray | None = None

    def __post_init__(self):
        self.keypoint_indices = np.asarray(self.keypoint_indices, dtype=np.int64).reshape(-1)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.scores) != len(self.keypoint_indices):
            raise ValueError("scores and keypoint_indices differ in length")
        if len(np.unique(self.keypoint_indices)) != len(self.keypoint_indices):
            raise ValueError("keypoint indices are not unique")
        if np.any(np.diff(self.scores) > 0):
            raise ValueError("scores must be in descending order")


def point_features(model, points):
    """(grids or None, valid mask) for every point of ``points``."""
    cfg = model.cfg
    if cfg.has("no_lrf"):
        return None, np.ones(len(points), dtype=bool)
    return compute_sdv_all(points, cfg.lrf_radius, cfg.grid_size)


def run_model(model, pc):
    """Per-point saliency, embeddings and LRF validity for cloud ``pc``."""
    pts = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)
    grids, valid = point_features(model, pts)
    phi, h = model.saliency(grids, pts.astype(np.float32))
    return phi, h, valid


def detect(model, pc, nms_radius=NMS_RADIUS, threshold=0.5, top_k=None, cloud_id=None):
    """NMS over valid points with saliency >= ``threshold``; optionally the first ``top_k``."""
    phi, h, valid = run_model(model, pc)
    pts = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)
    keep = nms(pts, phi.astype(np.float64), nms_radius, threshold, valid)
    if top_k is not None:
        keep = keep[:top_k]
    name = cloud_id if cloud_id is not None else getattr(pc, "name", "")
    return DetectionResult(name, keep, phi[keep], h, phi, valid)
