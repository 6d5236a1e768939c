"""Keypoint evaluation metrics and their file formats."""
from .io import (
    read_embeddings, read_keypoints, write_curve, write_embeddings, write_keypoints,
    write_report,
)
from .kmeans import kmeans
from .metrics import (
    MIOU_THRESHOLDS, MetricError, cluster_purity, correspondence_iou, greedy_match,
    keypoint_distances, keypoint_miou, mean_correspondence_ratio, miou_curve,
    miou_from_distances, repeatability_fraction, rotation_repeatability, top_k_by_score,
)

__all__ = [
    "MIOU_THRESHOLDS", "MetricError", "cluster_purity", "correspondence_iou", "greedy_match",
    "keypoint_distances", "keypoint_miou", "kmeans", "mean_correspondence_ratio", "miou_curve",
    "miou_from_distances", "read_embeddings", "read_keypoints", "repeatability_fraction",
    "rotation_repeatability", "top_k_by_score", "write_curve", "write_embeddings",
    "write_keypoints", "write_report",
]
