"""Reconstruction, WGAN-GP, generator and symmetry losses."""
from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import TrainingError
from ..geometry import chamfer_loss


def recon_loss(pred, target):
    """Chamfer distance between decoded points and the input cloud."""
    return chamfer_loss(pred, target)


def critic_loss(critic, real, fake, lambda_gp=1.0, rng=None):
    """mean D(fake) - mean D(real) + lambda * mean (||grad D(x_hat)|| - 1)^2.

    ``critic`` maps a (B, N) tensor to (B,) scores. ``x_hat`` interpolates
    each real/fake pair with its own eps ~ U(0, 1). Returns
    ``(loss, wasserstein_term, penalty)``; the last two are floats.
    """
    real = np.asarray(real.data if isinstance(real, ag.Tensor) else real)
    fake = np.asarray(fake.data if isinstance(fake, ag.Tensor) else fake)
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} samples differ in shape")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    dtype = ag.default_dtype()
    eps = rng.random((real.shape[0], 1)).astype(dtype)
    w_term = ag.sub(ag.mean(critic(ag.tensor(fake, dtype=dtype))),
                    ag.mean(critic(ag.tensor(real, dtype=dtype))))
    loss = w_term
    penalty = 0.0
    if lambda_gp > 0:
        x_hat = ag.tensor(eps * real + (1 - eps) * fake, requires_grad=True, dtype=dtype)
        scores = critic(x_hat)
        (g,) = ag.grad(ag.sum(scores), [x_hat], create_graph=True)
        norms = ag.sqrt(ag.add(ag.sum(ag.square(g), axis=1), 1e-12))
        gp = ag.mean(ag.square(ag.sub(norms, 1.0)))
        penalty = float(gp.data)
        if not np.isfinite(penalty):
            raise TrainingError("gradient penalty is not finite")
        loss = ag.add(loss, ag.scale(gp, lambda_gp))
    return loss, float(w_term.data), penalty


def generator_gan_loss(critic, fake):
    """-mean D(fake); gradients reach the saliency head through ``fake``."""
    return ag.neg(ag.mean(critic(fake)))


def sparsity_l1(saliency):
    """mean phi, the L1 stand-in for the GAN term in the no_gan ablation."""
    return ag.mean(saliency)


def sym_loss(saliency, embeddings, pairs):
    """(1/|S|) sum over pairs of |phi_i - phi_j| + ||h_i - h_j||_1; 0 for no pairs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return ag.tensor(0.0)
    i, j = pairs[:, 0], pairs[:, 1]
    dphi = ag.abs(ag.sub(ag.take(saliency, i), ag.take(saliency, j)))
    dh = ag.sum(ag.abs(ag.sub(ag.take(embeddings, i), ag.take(embeddings, j))), axis=1)
    return ag.mean(ag.add(dphi, dh))
