"""Detector-agnostic keypoint metrics. Every score is reported in [0, 100]
except ``keypoint_miou``, which is a ratio in [0, 1]."""
from __future__ import annotations

import logging

import numpy as np

from ..geometry import NMS_RADIUS, geodesic_matrix, knn_graph, nms, random_rotation, rotate
from .kmeans import RESTARTS, kmeans

log = logging.getLogger(__name__)

MIOU_THRESHOLDS = tuple(np.round(np.arange(1, 11) * 0.01, 2))


class MetricError(ValueError):
    pass


def _points(pc):
    return pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=np.float64)


# -------------------------------------------------- correspondence ratio
def cluster_purity(labels, clusters):
    """Mean over non-empty clusters of (majority label count) / (cluster size), in %."""
    labels = np.asarray(labels)
    clusters = np.asarray(clusters)
    ratios = []
    for c in np.unique(clusters):
        members = labels[clusters == c]
        ratios.append(np.bincount(members).max() / len(members))
    return 100.0 * float(np.mean(ratios))


def mean_correspondence_ratio(results, clouds, k=8, seed=0, restarts=RESTARTS):
    """Pool keypoints over instances, K-means them, score part-label purity."""
    coords, labels = [], []
    for res, pc in zip(results, clouds):
        if pc.part_labels is None:
            raise MetricError(f"cloud '{pc.name}' has no part labels")
        idx = np.asarray(res.keypoint_indices if hasattr(res, "keypoint_indices") else res,
                         dtype=np.int64)
        coords.append(_points(pc)[idx])
        labels.append(pc.part_labels[idx])
    coords = np.concatenate(coords) if coords else np.zeros((0, 3))
    labels = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
    if len(coords) < k:
        raise MetricError(f"{len(coords)} keypoints in total, fewer than k={k}")
    clusters, _, _ = kmeans(coords, k, restarts=restarts, seed=seed)
    return cluster_purity(labels, clusters)


# ---------------------------------------------------------------- mIoU
def greedy_match(dist, threshold):
    """Match rows to columns by ascending distance, each used once, d <= threshold.

    Ties break by (row, column). Returns the list of matched (row, col).
    """
    dist = np.asarray(dist, dtype=np.float64)
    rows, cols = np.nonzero(dist <= threshold)
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_r, used_c, out = set(), set(), []
    for t in order:
        r, c = int(rows[t]), int(cols[t])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        out.append((r, c))
    return out


def miou_from_distances(dist, threshold):
    n_det, n_gt = dist.shape
    if n_gt == 0:
        raise MetricError("no ground-truth keypoints")
    if n_det == 0:
        return 0.0
    matched = len(greedy_match(dist, threshold))
    return matched / (n_det + n_gt - matched)


def keypoint_distances(detected, gt, pc, graph=None):
    """Geodesic distances (len(detected), len(gt)); inf where unreachable."""
    detected = np.asarray(detected, dtype=np.int64).reshape(-1)
    gt = np.asarray(gt, dtype=np.int64).reshape(-1)
    if len(detected) == 0:
        return np.zeros((0, len(gt)))
    return geodesic_matrix(pc, detected, graph=graph)[:, gt]


def keypoint_miou(detected, gt, pc, geo_threshold=0.1, graph=None):
    """Greedy geodesic matching IoU of detected vs ground-truth keypoint indices."""
    gt = np.asarray(gt, dtype=np.int64).reshape(-1)
    if len(gt) == 0:
        raise MetricError("no ground-truth keypoints")
    return miou_from_distances(keypoint_distances(detected, gt, pc, graph), geo_threshold)


def miou_curve(detected, gt, pc, thresholds=MIOU_THRESHOLDS, graph=None):
    dist = keypoint_distances(detected, gt, pc, graph)
    return [miou_from_distances(dist, t) for t in thresholds]


# -------------------------------------------------------- repeatability
def repeatability_fraction(kp_a, kp_b, dist_threshold=0.1):
    """Fraction of points in ``kp_a`` whose nearest point of ``kp_b`` is within threshold."""
    kp_a = np.asarray(kp_a, dtype=np.float64).reshape(-1, 3)
    kp_b = np.asarray(kp_b, dtype=np.float64).reshape(-1, 3)
    if len(kp_a) == 0:
        raise MetricError("no keypoints to score")
    if len(kp_b) == 0:
        return 0.0
    d2 = ((kp_a[:, None] - kp_b[None]) ** 2).sum(-1).min(axis=1)
    return float(np.mean(d2 <= dist_threshold ** 2))


def rotation_repeatability(detector, pc, n_keypoints, dist_threshold=0.1, n_rotations=20,
                           seed=0):
    """Mean % of keypoints re-detected after random rotations.

    ``detector(points) -> indices`` returns at least ``n_keypoints`` indices
    ranked by score. Keypoints found on the rotated cloud are rotated back
    before matching against those of the original.
    """
    if n_keypoints < 1:
        raise MetricError("n_keypoints must be >= 1")
    pts = _points(pc)

    def top(points):
        idx = np.asarray(detector(points), dtype=np.int64)
        if len(idx) < n_keypoints:
            raise MetricError(f"detector returned {len(idx)} keypoints, "
                              f"{n_keypoints} requested")
        return idx[:n_keypoints]

    base = pts[top(pts)]
    rng = np.random.default_rng(seed)
    fractions = []
    for _ in range(n_rotations):
        R = random_rotation(rng)
        moved = rotate(pts, R)
        back = moved[top(moved)] @ R            # inverse of p -> p R^T
        fractions.append(repeatability_fraction(base, back, dist_threshold))
    return 100.0 * float(np.mean(fractions))


# --------------------------------------------------- correspondence IoU
def _ids(result, corr, on_collision):
    idx = np.asarray(result.keypoint_indices if hasattr(result, "keypoint_indices") else result,
                     dtype=np.int64)
    ids = np.asarray(corr, dtype=np.int64)[idx]
    if len(np.unique(ids)) != len(ids):
        if on_collision == "error":
            raise MetricError(f"{len(ids) - len(np.unique(ids))} detected keypoints share "
                              "a correspondence id")
        log.debug("merging %d colliding correspondence ids", len(ids) - len(np.unique(ids)))
    return set(ids.tolist())


def correspondence_iou(result_a, result_b, corr_a, corr_b=None, dice=False,
                       on_collision="error"):
    """|A & B| / |A | B| in %, over correspondence ids of the detections.

    ``corr_a``/``corr_b`` map point indices of each cloud to shared ids
    (``corr_b`` defaults to ``corr_a`` for one shared index space). With
    ``dice`` the denominator is (|A| + |B|) / 2 instead. ``on_collision``
    is "error" or "merge" for detections that share an id within one cloud.
    """
    if on_collision not in ("error", "merge"):
        raise ValueError("on_collision must be 'error' or 'merge'")
    a = _ids(result_a, corr_a, on_collision)
    b = _ids(result_b, corr_a if corr_b is None else corr_b, on_collision)
    if not a and not b:
        raise MetricError("neither result has detections")
    inter = len(a & b)
    denom = (len(a) + len(b)) / 2.0 if dice else len(a | b)
    return 100.0 * inter / denom


# ----------------------------------------------------------- ranking
def top_k_by_score(saliency, valid_mask, k, points=None, nms_radius=NMS_RADIUS):
    """Highest-scoring valid candidates (NMS-filtered when ``points`` is given)."""
    saliency = np.asarray(saliency, dtype=np.float64)
    valid = np.ones(len(saliency), dtype=bool) if valid_mask is None \
        else np.asarray(valid_mask, dtype=bool)
    if points is not None:
        ranked = nms(points, saliency, nms_radius, -np.inf, valid)
    else:
        cand = np.flatnonzero(valid)
        ranked = cand[np.lexsort((cand, -saliency[cand]))]
    if len(ranked) < k:
        raise MetricError(f"only {len(ranked)} candidates for k={k}")
    return ranked[:k]
