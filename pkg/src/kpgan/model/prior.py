"""Beta prior for the critic's real samples."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BetaPrior:
    alpha: float = 0.01
    beta: float = 0.05

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"Beta parameters must be positive, got ({self.alpha}, {self.beta})")


def sample_beta_prior(prior: BetaPrior, n, seed=None):
    """``n`` i.i.d. Beta(alpha, beta) draws as X / (X + Y), X ~ G(alpha), Y ~ G(beta).

    ``n`` may be a shape tuple. For tiny shape parameters both Gamma draws
    can underflow to zero; such samples are resolved by comparing the draws'
    logarithms, computed through ``G(a) = G(a + 1) * U**(1/a)``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (n,) if np.isscalar(n) else tuple(n)
    if int(np.prod(shape)) < 1:
        raise ValueError("need at least one sample")
    a, b = prior.alpha, prior.beta
    # log-space Gamma draws avoid 0/0 when alpha, beta << 1
    log_x = np.log(rng.gamma(a + 1.0, size=shape)) + np.log(rng.random(shape)) / a
    log_y = np.log(rng.gamma(b + 1.0, size=shape)) + np.log(rng.random(shape)) / b
    m = np.maximum(log_x, log_y)
    x, y = np.exp(log_x - m), np.exp(log_y - m)
    return (x / (x + y)).astype(np.float32)
