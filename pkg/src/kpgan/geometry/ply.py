"""ASCII PLY point clouds.

Vertex properties ``x y z`` (float) are required; ``part`` and ``corr`` (int)
carry part labels and correspondence ids. Keypoints and the symmetry plane
travel as header comments::

    comment symmetry_plane nx ny nz d
    comment keypoint 17

Other vertex properties are skipped with a warning. Files with faces are
rejected: only point clouds are supported.
"""
from __future__ import annotations

import logging
import os

import numpy as np

from .cloud import PointCloud

log = logging.getLogger(__name__)

_INT_TYPES = {"char", "uchar", "short", "ushort", "int", "uint", "int8", "uint8",
              "int16", "uint16", "int32", "uint32"}
_FLOAT_TYPES = {"float", "double", "float32", "float64"}


class PlyError(ValueError):
    pass


def write_ply(path, pc: PointCloud, colors=None):
    """Write ``pc``; ``colors`` is an optional (N, 3) uint8 array."""
    n = len(pc)
    lines = ["ply", "format ascii 1.0"]
    if pc.symmetry_plane is not None:
        normal, offset = pc.symmetry_plane
        lines.append("comment symmetry_plane " + " ".join(f"{v:.9g}" for v in (*normal, offset)))
    if pc.gt_keypoints is not None:
        lines.extend(f"comment keypoint {int(k)}" for k in pc.gt_keypoints)
    lines.append(f"element vertex {n}")
    lines.extend(f"property float {a}" for a in "xyz")
    columns = [np.char.mod("%.9g", pc.points[:, i]) for i in range(3)]
    if pc.part_labels is not None:
        lines.append("property int part")
        columns.append(pc.part_labels.astype(str))
    if pc.correspondence_ids is not None:
        lines.append("property int corr")
        columns.append(pc.correspondence_ids.astype(str))
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(n, 3)
        lines.extend(f"property uchar {c}" for c in ("red", "green", "blue"))
        columns.extend(colors[:, i].astype(str) for i in range(3))
    lines.append("end_header")
    body = [" ".join(row) for row in zip(*columns)]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines + body) + "\n")
    os.replace(tmp, path)


def read_ply(path, name: str | None = None, return_extra: bool = False):
    """Parse an ASCII PLY point cloud.

    With ``return_extra`` the skipped vertex properties come back as a dict of
    arrays alongside the cloud.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != "ply":
        raise PlyError(f"{path}:1: missing 'ply' magic")
    props: list[tuple[str, str]] = []
    n_vertex = None
    current = None
    keypoints: list[int] = []
    plane = None
    body_start = None
    for lineno, raw in enumerate(text[1:], start=2):
        parts = raw.split()
        if not parts:
            continue
        head = parts[0]
        if head == "format":
            if len(parts) < 2 or parts[1] != "ascii":
                raise PlyError(f"{path}:{lineno}: only ascii PLY is supported")
        elif head == "comment":
            if len(parts) >= 2 and parts[1] == "keypoint":
                try:
                    keypoints.append(int(parts[2]))
                except (IndexError, ValueError):
                    raise PlyError(f"{path}:{lineno}: bad keypoint comment") from None
            elif len(parts) >= 2 and parts[1] == "symmetry_plane":
                try:
                    vals = [float(v) for v in parts[2:6]]
                    if len(vals) != 4:
                        raise ValueError
                except ValueError:
                    raise PlyError(f"{path}:{lineno}: bad symmetry_plane comment") from None
                plane = (np.array(vals[:3]), vals[3])
        elif head == "element":
            if len(parts) != 3:
                raise PlyError(f"{path}:{lineno}: malformed element line")
            current = parts[1]
            try:
                count = int(parts[2])
            except ValueError:
                raise PlyError(f"{path}:{lineno}: bad element count") from None
            if current == "vertex":
                n_vertex = count
            elif current == "face" and count > 0:
                raise PlyError(f"{path}:{lineno}: meshes with faces are not supported")
            elif count > 0:
                raise PlyError(f"{path}:{lineno}: unsupported element '{current}'")
        elif head == "property":
            if current != "vertex":
                continue
            if len(parts) != 3:
                raise PlyError(f"{path}:{lineno}: malformed property line")
            props.append((parts[2], parts[1]))
        elif head == "end_header":
            body_start = lineno
            break
        elif head == "obj_info":
            continue
        else:
            raise PlyError(f"{path}:{lineno}: unexpected header line '{raw.strip()}'")
    if body_start is None:
        raise PlyError(f"{path}: missing end_header")
    if n_vertex is None:
        raise PlyError(f"{path}: no vertex element")
    names = [p[0] for p in props]
    for axis in "xyz":
        if axis not in names:
            raise PlyError(f"{path}: vertex property '{axis}' missing")
    known = {"x", "y", "z", "part", "corr"}
    for pname in names:
        if pname not in known:
            log.warning("%s: skipping unknown vertex property '%s'", path, pname)

    rows = []
    lineno = body_start
    for raw in text[body_start:]:
        lineno += 1
        if len(rows) == n_vertex:
            if raw.strip():
                raise PlyError(f"{path}:{lineno}: trailing data after {n_vertex} vertices")
            continue
        vals = raw.split()
        if not vals:
            continue
        if len(vals) != len(props):
            raise PlyError(f"{path}:{lineno}: expected {len(props)} values, got {len(vals)}")
        try:
            rows.append([float(v) for v in vals])
        except ValueError:
            raise PlyError(f"{path}:{lineno}: non-numeric vertex value") from None
    if len(rows) != n_vertex:
        raise PlyError(f"{path}: expected {n_vertex} vertices, found {len(rows)}")
    data = np.asarray(rows, dtype=np.float64).reshape(n_vertex, len(props))
    col = {pname: data[:, i] for i, pname in enumerate(names)}
    points = np.stack([col["x"], col["y"], col["z"]], axis=1)
    part = col["part"].astype(np.int64) if "part" in col else None
    corr = col["corr"].astype(np.int64) if "corr" in col else None
    if name is None:
        name = os.path.splitext(os.path.basename(str(path)))[0]
    pc = PointCloud(points, part, np.asarray(keypoints, dtype=np.int64) if keypoints else None,
                    corr, plane, name)
    if return_extra:
        extra = {k: v for k, v in col.items() if k not in known}
        return pc, extra
    return pc
