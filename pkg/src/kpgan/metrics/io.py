"""Keypoint files ("index score" per line) and CSV metric reports."""
import csv
import os
import struct

import numpy as np

from ..model.detect import DetectionResult

EMBED_MAGIC = b"UKPE"


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_keypoints(path, result):
    lines = [f"{int(i)} {s:.9g}" for i, s in zip(result.keypoint_indices, result.scores)]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_keypoints(path, cloud_id=None):
    idx, scores = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'index score'")
            try:
                idx.append(int(parts[0]))
                scores.append(float(parts[1]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'index score'") from None
    if cloud_id is None:
        cloud_id = os.path.splitext(os.path.basename(str(path)))[0]
    order = np.lexsort((np.asarray(idx), -np.asarray(scores))) if idx else []
    return DetectionResult(cloud_id, np.asarray(idx, dtype=np.int64)[order],
                           np.asarray(scores)[order])


def write_embeddings(path, embeddings):
    """Binary: "UKPE", u32 N, u32 F, then N*F little-endian f32."""
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    n, f = emb.shape
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(EMBED_MAGIC + struct.pack("<II", n, f) + emb.tobytes())
    os.replace(tmp, path)


def read_embeddings(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != EMBED_MAGIC or len(blob) < 12:
        raise ValueError(f"{path}: not an embedding file")
    n, f = struct.unpack("<II", blob[4:12])
    if len(blob) != 12 + 4 * n * f:
        raise ValueError(f"{path}: expected {n}x{f} values, file is truncated")
    return np.frombuffer(blob[12:], dtype="<f4").reshape(n, f).copy()


def write_report(path, rows):
    """CSV with columns metric, category, value."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("metric", "category", "value"))
        for metric, category, value in rows:
            w.writerow((metric, category, "%.6f" % value))
    os.replace(tmp, path)


def write_curve(path, thresholds, values, category=""):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "category", "value"))
        for t, v in zip(thresholds, values):
            w.writerow(("%.4f" % t, category, "%.6f" % v))
    os.replace(tmp, path)
