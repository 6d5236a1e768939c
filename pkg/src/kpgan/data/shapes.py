"""Seeded synthetic shapes built from axis-aligned box components.

Every family is mirror-symmetric about x = 0. Half the points are sampled on
the x >= 0 side and mirrored, so each point has an exact mirror mate. Part
labels follow the component list of each family:

    rectangle  plate (0)
    box        box (0)
    table      top (0), legs (1-4)
    chair      seat (0), back (1), legs (2-5)

Correspondence ids name the nearest of the 26 boundary anchors of a
component's box, ``{0, 1/2, 1}^3`` minus the centre, offset by
``27 * component``. They are stable across instances of one family.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import PointCloud, normalize_cloud

FAMILIES = ("rectangle", "box", "table", "chair")
DEFAULT_JITTER = 0.003

# (lo, hi) ranges for the per-family size parameters
SIZE_RANGES = {
    "rectangle": {"width": (1.2, 2.0), "depth": (0.5, 1.0)},
    "box": {"width": (0.8, 1.6), "depth": (0.6, 1.2), "height": (0.4, 1.0)},
    "table": {"width": (1.2, 2.0), "depth": (0.6, 1.2), "height": (0.6, 1.0),
              "top": (0.06, 0.1), "leg": (0.08, 0.12)},
    "chair": {"width": (0.8, 1.1), "depth": (0.8, 1.1), "height": (0.7, 0.9),
              "back": (0.7, 1.0), "seat": (0.06, 0.1), "leg": (0.07, 0.1)},
}

_ANCHORS = np.array([(a, b, c) for a in (0, 0.5, 1) for b in (0, 0.5, 1) for c in (0, 0.5, 1)])
_CENTRE_ANCHOR = 13


class GenerationError(ValueError):
    pass


@dataclass
class ShapeSpec:
    family: str
    size: dict = field(default_factory=dict)
    n_points: int = 2048
    jitter: float = DEFAULT_JITTER
    seed: int = 0

    @classmethod
    def random(cls, family, seed, n_points=2048, jitter=DEFAULT_JITTER):
        """Spec with size parameters drawn uniformly from the family ranges."""
        if family not in SIZE_RANGES:
            raise GenerationError(f"unknown family '{family}'; expected one of {FAMILIES}")
        rng = np.random.default_rng(seed)
        size = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in SIZE_RANGES[family].items()}
        return cls(family, size, n_points, jitter, seed)

    def full_size(self):
        if self.family not in SIZE_RANGES:
            raise GenerationError(f"unknown family '{self.family}'; expected one of {FAMILIES}")
        unknown = set(self.size) - set(SIZE_RANGES[self.family])
        if unknown:
            raise GenerationError(f"{self.family}: unknown size parameters {sorted(unknown)}")
        size = {k: (lo + hi) / 2 for k, (lo, hi) in SIZE_RANGES[self.family].items()}
        size.update(self.size)
        for k, v in size.items():
            if not np.isfinite(v) or v <= 0:
                raise GenerationError(f"{self.family}: size parameter {k}={v} must be positive")
        return size


def _box(lo, hi):
    return np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)


def _components(family, s):
    """Component boxes and analytic keypoints (before normalisation)."""
    if family == "rectangle":
        w, d = s["width"] / 2, s["depth"] / 2
        comps = [_box((-w, -d, 0), (w, d, 0))]
        keys = [(x, y, 0) for x in (-w, w) for y in (-d, d)]
    elif family == "box":
        w, d, h = s["width"] / 2, s["depth"] / 2, s["height"]
        comps = [_box((-w, -d, 0), (w, d, h))]
        keys = [(x, y, z) for x in (-w, w) for y in (-d, d) for z in (0, h)]
    elif family == "table":
        w, d, h, t, g = s["width"] / 2, s["depth"] / 2, s["height"], s["top"], s["leg"]
        if 2 * g >= min(w, d) or t >= h:
            raise GenerationError("table: legs or top too thick for the footprint")
        comps = [_box((-w, -d, h - t), (w, d, h))]
        keys = [(x, y, h) for x in (-w, w) for y in (-d, d)]
        for x in (-1, 1):
            for y in (-1, 1):
                cx, cy = x * (w - g), y * (d - g)
                comps.append(_box((cx - g / 2, cy - g / 2, 0), (cx + g / 2, cy + g / 2, h - t)))
                keys.append((cx, cy, 0))
    elif family == "chair":
        w, d, h, b = s["width"] / 2, s["depth"] / 2, s["height"], s["back"]
        t, g = s["seat"], s["leg"]
        if 2 * g >= min(w, d) or t >= h:
            raise GenerationError("chair: legs or seat too thick for the footprint")
        comps = [_box((-w, -d, h - t), (w, d, h)),
                 _box((-w, d - t, h), (w, d, h + b))]
        keys = [(x, y, h) for x in (-w, w) for y in (-d, d - t)]
        keys += [(x, d, h + b) for x in (-w, w)]
        for x in (-1, 1):
            for y in (-1, 1):
                cx, cy = x * (w - g), y * (d - g)
                comps.append(_box((cx - g / 2, cy - g / 2, 0), (cx + g / 2, cy + g / 2, h - t)))
                keys.append((cx, cy, 0))
    else:
        raise GenerationError(f"unknown family '{family}'; expected one of {FAMILIES}")
    return comps, np.asarray(keys, dtype=np.float64)


def _faces(lo, hi):
    """Non-degenerate faces as (axis, value, lo, hi); flat boxes give one face."""
    out = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        if np.any(hi[others] - lo[others] <= 0):
            continue
        values = (lo[axis],) if hi[axis] == lo[axis] else (lo[axis], hi[axis])
        out.extend((axis, v, lo, hi) for v in values)
    return out


def _sample_surface(comps, n, rng):
    """``n`` area-uniform points with x >= 0 on the union's surface."""
    faces = []
    for ci, (lo, hi) in enumerate(comps):
        lo = lo.copy()
        lo[0] = max(lo[0], 0.0)
        if hi[0] <= lo[0]:
            continue
        for axis, value, flo, fhi in _faces(lo, hi):
            if axis == 0 and value == 0.0 and comps[ci][0][0] < 0:
                continue        # cut made by the mirror plane, not a real face
            others = [a for a in range(3) if a != axis]
            area = float(np.prod(fhi[others] - flo[others]))
            faces.append((ci, axis, value, flo, fhi, area))
    areas = np.array([f[-1] for f in faces])
    probs = areas / areas.sum()
    pts, labels = [], []
    have = 0
    while have < n:
        m = 2 * (n - have) + 16
        which = rng.choice(len(faces), size=m, p=probs)
        u = rng.random((m, 3))
        cand = np.empty((m, 3))
        for k, (ci, axis, value, flo, fhi, _) in enumerate(faces):
            sel = which == k
            cand[sel] = flo + u[sel] * (fhi - flo)
            cand[sel, axis] = value
        comp = np.array([faces[k][0] for k in which])
        inside = np.zeros(m, dtype=bool)
        for ci, (lo, hi) in enumerate(comps):
            strictly = np.all((cand > lo + 1e-9) & (cand < hi - 1e-9), axis=1)
            inside |= strictly & (comp != ci)
        keep = ~inside
        pts.append(cand[keep])
        labels.append(comp[keep])
        have += int(keep.sum())
    return np.concatenate(pts)[:n], np.concatenate(labels)[:n]


def _correspondence(points, labels, comps):
    ids = np.empty(len(points), dtype=np.int64)
    for ci, (lo, hi) in enumerate(comps):
        sel = labels == ci
        ext = hi - lo
        t = np.where(ext > 0, (points[sel] - lo) / np.where(ext > 0, ext, 1.0), 0.5)
        d = ((t[:, None, :] - _ANCHORS[None]) ** 2).sum(-1)
        d[:, _CENTRE_ANCHOR] = np.inf
        ids[sel] = ci * 27 + np.argmin(d, axis=1)
    return ids


def generate(spec: ShapeSpec) -> PointCloud:
    """Sample ``spec`` and return a normalised, annotated cloud."""
    if spec.n_points < 64 or spec.n_points % 2:
        raise GenerationError(f"n_points must be even and >= 64, got {spec.n_points}")
    if not spec.jitter >= 0:
        raise GenerationError(f"jitter must be >= 0, got {spec.jitter}")
    size = spec.full_size()
    comps, keys = _components(spec.family, size)
    rng = np.random.default_rng(spec.seed)
    half, labels = _sample_surface(comps, spec.n_points // 2, rng)
    # pin one sample to each analytic corner on this side; a corner sees only
    # a fraction of the surface density, so a free sample can land far from it
    for key in keys[keys[:, 0] > 0]:
        half[np.argmin(((half - key) ** 2).sum(axis=1))] = key
    ids = _correspondence(half, labels, comps)
    if spec.jitter > 0:
        half = half + rng.normal(scale=spec.jitter, size=half.shape)
    mirror = half * np.array([-1.0, 1.0, 1.0])
    mate = _mirror_components(comps)
    points = np.concatenate([half, mirror])
    ids = np.concatenate([ids, _mirror_ids(ids, mate)])
    labels = np.concatenate([labels, mate[labels]])

    gt = []
    for key in keys:
        j = int(np.argmin(((points - key) ** 2).sum(axis=1)))
        if j not in gt:
            gt.append(j)
    pc = PointCloud(points, labels, gt, ids, ((1.0, 0.0, 0.0), 0.0),
                    f"{spec.family}_{spec.seed}")
    return normalize_cloud(pc)


def _mirror_components(comps):
    """Index of each component's mirror image (legs come in mirror pairs)."""
    centres = np.array([(lo + hi) / 2 for lo, hi in comps])
    target = centres * np.array([-1.0, 1.0, 1.0])
    return np.argmin(((target[:, None] - centres[None]) ** 2).sum(-1), axis=1)


def _mirror_ids(ids, mate):
    # the anchor's x coordinate flips along with the component
    comp, anchor = ids // 27, ids % 27
    a, rest = anchor // 9, anchor % 9
    return mate[comp] * 27 + (2 - a) * 9 + rest


def expected_spacing(pc: PointCloud) -> float:
    """Mean nearest-neighbour distance, the sampling resolution."""
    d, _ = cKDTree(pc.points).query(pc.points, k=2)
    return float(d[:, 1].mean())
