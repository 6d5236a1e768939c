"""Pooling of saliency-weighted embeddings into one global feature."""
import numpy as np

from .. import autograd as ag
from ..autograd import DimensionError


def distill(saliency, embeddings):
    """Coordinate-wise max of phi * relu(h), then of phi * relu(-h); length 2F.

    Keeping the negative half separately means embedding coordinates with a
    large negative value survive the max. Gradients reach only the argmax
    point of each coordinate.
    """
    if embeddings.shape[0] < 1:
        raise DimensionError("distill needs at least one point")
    phi = ag.reshape(saliency, (saliency.shape[0], 1))
    pos = ag.max(ag.mul(phi, ag.relu(embeddings)), axis=0)
    neg = ag.max(ag.mul(phi, ag.relu(ag.neg(embeddings))), axis=0)
    return ag.concat([pos, neg], axis=0)


def distill_soft(saliency, embeddings, gamma=1.0):
    """sum_x phi^g / Z * h^g with Z = sum_x phi^g; length F.

    ``h^g`` is the signed power so odd and fractional exponents keep the
    sign of h. At gamma = 1 this is the saliency-weighted mean embedding.
    Returns zeros when every phi is zero.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    if embeddings.shape[0] < 1:
        raise DimensionError("distill_soft needs at least one point")
    w = saliency if gamma == 1 else ag.signed_power(saliency, gamma)
    hg = embeddings if gamma == 1 else ag.signed_power(embeddings, gamma)
    z = ag.sum(w)
    if float(z.data) <= 0:
        return ag.scale(ag.sum(hg, axis=0), 0.0)
    w = ag.reshape(w, (w.shape[0], 1))
    return ag.div(ag.sum(ag.mul(w, hg), axis=0), z)
