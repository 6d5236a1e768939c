"""Hot-loop kernels, compiled when available.

``kpgan._ckernels`` (Cython) is used if it was built; otherwise the numpy
versions in ``kpgan._fallback`` are used. Set ``KPGAN_PURE_PYTHON=1`` to force
the fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _fallback

NAMES = ("im2col3d", "col2im3d", "radius_neighbors_all", "nearest_neighbor",
         "sdv_splat", "greedy_nms")

_compiled = None
if os.environ.get("KPGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback

im2col3d = _impl.im2col3d
col2im3d = _impl.col2im3d
radius_neighbors_all = _impl.radius_neighbors_all
nearest_neighbor = _impl.nearest_neighbor
sdv_splat = _impl.sdv_splat
greedy_nms = _impl.greedy_nms


def implementations():
    """Both backends as ``{"python": module, "compiled": module-or-None}``."""
    return {"python": _fallback, "compiled": _compiled}
