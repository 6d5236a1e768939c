"""Chamfer distance and kNN-graph geodesics."""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .. import autograd as ag
from .. import kernels
from .cloud import GeometryError

GEODESIC_K = 10


def _as_points(x):
    return x.points if hasattr(x, "points") else np.asarray(x, dtype=np.float64).reshape(-1, 3)


def chamfer_distance(a, b) -> float:
    """Mean squared nearest-neighbour distance, summed over both directions."""
    a, b = _as_points(a), _as_points(b)
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("chamfer distance of an empty set")
    _, dab = kernels.nearest_neighbor(a, b)
    _, dba = kernels.nearest_neighbor(b, a)
    return float(dab.mean() + dba.mean())


def chamfer_loss(pred, target):
    """Differentiable chamfer distance; ``pred``/``target`` are (M,3)/(K,3) tensors or arrays.

    Nearest neighbours are found on the values; gradients flow through the
    matched pairs (the subgradient of the min).
    """
    pred = ag.tensor(pred) if not isinstance(pred, ag.Tensor) else pred
    target = ag.tensor(target, dtype=pred.dtype) if not isinstance(target, ag.Tensor) else target
    if pred.shape[0] == 0 or target.shape[0] == 0:
        raise GeometryError("chamfer distance of an empty set")
    i_pt, _ = kernels.nearest_neighbor(pred.data, target.data)
    i_tp, _ = kernels.nearest_neighbor(target.data, pred.data)
    fwd = ag.mean(ag.sum(ag.square(pred - ag.take(target, i_pt, 0)), axis=1))
    bwd = ag.mean(ag.sum(ag.square(target - ag.take(pred, i_tp, 0)), axis=1))
    return fwd + bwd


def knn_graph(points, k: int = GEODESIC_K):
    """Symmetrised kNN graph with Euclidean edge weights (scipy sparse)."""
    points = _as_points(points)
    n = len(points)
    k = min(k, n - 1)
    if k < 1:
        return coo_matrix((n, n)).tocsr()
    dist, idx = cKDTree(points).query(points, k=k + 1)
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, 1:].reshape(-1)
    w = dist[:, 1:].reshape(-1)
    g = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    return g.maximum(g.T)


def geodesic_distances(pc, source: int, k: int = GEODESIC_K, graph=None) -> np.ndarray:
    """Shortest-path distances from ``source`` over the kNN graph (inf if unreachable)."""
    if graph is None:
        graph = knn_graph(pc, k)
    return dijkstra(graph, directed=False, indices=int(source))


def geodesic_matrix(pc, sources, k: int = GEODESIC_K, graph=None) -> np.ndarray:
    if graph is None:
        graph = knn_graph(pc, k)
    return dijkstra(graph, directed=False, indices=np.asarray(sources, dtype=np.int64))
