"""Corpus on disk: one PLY per cloud plus ``manifest.csv`` (id, family, split, path)."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from ..geometry import GeometryError, PointCloud, read_ply, write_ply
from .shapes import FAMILIES, ShapeSpec, generate

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.75, 0.10, 0.15)
MANIFEST = "manifest.csv"


@dataclass
class Item:
    id: str
    family: str
    split: str
    cloud: PointCloud


def split_counts(n):
    """(train, val, test) counts; val and test are rounded down."""
    val = int(np.floor(n * SPLIT_FRACTIONS[1] + 1e-9))
    test = int(np.floor(n * SPLIT_FRACTIONS[2] + 1e-9))
    return n - val - test, val, test


def make_corpus(families=FAMILIES, per_family=84, seed=0, n_points=2048, jitter=None):
    """Generate ``per_family`` clouds for each family, split 75/10/15.

    Every cloud gets its own seed drawn from the master ``seed``, so adding a
    family does not change the clouds of the others.
    """
    items = []
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown family '{fam}'; expected one of {FAMILIES}")
        fam_seed = np.random.SeedSequence([seed, FAMILIES.index(fam)])
        seeds = fam_seed.generate_state(per_family)
        n_train, n_val, _ = split_counts(per_family)
        for i, s in enumerate(seeds):
            split = "train" if i < n_train else "val" if i < n_train + n_val else "test"
            kw = {} if jitter is None else {"jitter": jitter}
            spec = ShapeSpec.random(fam, int(s), n_points=n_points, **kw)
            pc = generate(spec)
            cid = f"{fam}_{i:03d}"
            pc.name = cid
            items.append(Item(cid, fam, split, pc))
    return items


def write_dataset(items, root):
    os.makedirs(root, exist_ok=True)
    rows = []
    for it in items:
        rel = f"{it.id}.ply"
        write_ply(os.path.join(root, rel), it.cloud)
        rows.append((it.id, it.family, it.split, rel))
    tmp = os.path.join(root, MANIFEST + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id", "family", "split", "path"))
        w.writerows(rows)
    os.replace(tmp, os.path.join(root, MANIFEST))


def read_manifest(root):
    path = os.path.join(root, MANIFEST)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "family", "split", "path"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest lacks columns {sorted(missing)}")
        return list(reader)


def read_dataset(root, split=None, families=None):
    """Load the corpus; ``split`` and ``families`` filter the manifest."""
    items = []
    for row in read_manifest(root):
        if split is not None and row["split"] != split:
            continue
        if families is not None and row["family"] not in families:
            continue
        pc = read_ply(os.path.join(root, row["path"]), name=row["id"])
        items.append(Item(row["id"], row["family"], row["split"], pc))
    return items


def downsample(pc: PointCloud, m: int, seed=0) -> PointCloud:
    """Uniform subsample of ``m`` points without replacement, original order kept.

    Ground-truth keypoints are re-snapped to the nearest kept point.
    """
    n = len(pc)
    if not 1 <= m <= n:
        raise GeometryError(f"cannot downsample {n} points to {m}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    out = pc.subset(idx)
    if pc.gt_keypoints is not None:
        snapped = []
        for k in pc.gt_keypoints:
            j = int(np.argmin(((out.points - pc.points[k]) ** 2).sum(axis=1)))
            if j not in snapped:
                snapped.append(j)
        out.gt_keypoints = np.asarray(snapped, dtype=np.int64)
    return out
