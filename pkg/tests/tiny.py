"""Small configurations and clouds shared by model and training tests."""
import numpy as np

from kpgan.autograd import Tensor
from kpgan.config import RunConfig
from kpgan.data import ShapeSpec, generate


def tiny_cfg(**kw):
    base = dict(grid_size=4, encoder_channels=(2, 2, 3, 3, 4, 4, 4), trunk_widths=(8,),
                feature_dim=4, decoder_widths=(8, 8), node_dim=3, root_children=2, fanout=2,
                n_output=16, critic_channels=(6, 4, 1), xyz_widths=(6,), centers_per_cloud=32,
                batch_size=2, critic_steps=2, lr=1e-3, critic_lr=1e-3)
    base.update(kw)
    return RunConfig(**base).validate()


def rectangles(n=4, n_points=128, seed=0):
    return [generate(ShapeSpec.random("rectangle", seed + i, n_points=n_points))
            for i in range(n)]


def f64(params, **replace):
    """Copy of a parameter dict in float64, with some entries replaced."""
    out = {k: Tensor(v.data.astype(np.float64)) for k, v in params.items()}
    out.update(replace)
    return out
