"""Encoder, saliency/embedding heads, distillation, tree decoder and critic.

Parameters live in flat name -> Tensor dicts so they can be checkpointed and
handed to Adam directly. The generator (encoder, heads, decoder) and the
critic keep separate dicts because they are optimised separately.
"""
from __future__ import annotations

import numpy as np

from .. import autograd as ag
from ..autograd import DimensionError, Tensor
from ..config import RunConfig


def _init(rng, shape, fan_in):
    # He-normal for leaky_relu stacks
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


def _param(data):
    return ag.tensor(data, requires_grad=True)


def _linear_params(params, rng, name, n_in, n_out):
    params[f"{name}.w"] = _param(_init(rng, (n_in, n_out), n_in))
    params[f"{name}.b"] = _param(np.zeros(n_out, dtype=np.float32))


def _linear(params, name, x):
    return ag.add(ag.matmul(x, params[f"{name}.w"]), params[f"{name}.b"])


def encoder_output_size(cfg: RunConfig):
    n = cfg.grid_size
    for s in cfg.encoder_strides:
        n = (n + 2 * cfg.padding - cfg.kernel_size) // s + 1
        if n <= 0:
            raise DimensionError(f"encoder reduces a {cfg.grid_size}^3 grid to nothing")
    return n


def init_generator(cfg: RunConfig, seed=0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    params = {}
    if cfg.has("no_lrf"):
        widths = (3,) + tuple(cfg.xyz_widths) + (cfg.encoder_channels[-1],)
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            _linear_params(params, rng, f"xyz{i}", a, b)
    else:
        encoder_output_size(cfg)
        c_in, k = 1, cfg.kernel_size
        for i, c in enumerate(cfg.encoder_channels):
            fan = c_in * k ** 3
            params[f"conv{i}.w"] = _param(_init(rng, (c, c_in, k, k, k), fan))
            params[f"conv{i}.b"] = _param(np.zeros(c, dtype=np.float32))
            c_in = c
    width = cfg.encoder_channels[-1]
    for i, w in enumerate(cfg.trunk_widths):
        _linear_params(params, rng, f"trunk{i}", width, w)
        width = w
    _linear_params(params, rng, "saliency", width, 1)
    _linear_params(params, rng, "embed", width, cfg.feature_dim)
    gdim = global_dim(cfg)
    h1, h2 = cfg.decoder_widths
    _linear_params(params, rng, "root0", gdim, h1)
    _linear_params(params, rng, "root1", h1, h2)
    _linear_params(params, rng, "root2", h2, cfg.root_children * cfg.node_dim)
    depth = cfg.tree_depth()
    for lvl in range(depth):
        out = cfg.fanout * (3 if lvl == depth - 1 else cfg.node_dim)
        _linear_params(params, rng, f"level{lvl}.0", cfg.node_dim + gdim, h1)
        _linear_params(params, rng, f"level{lvl}.1", h1, h2)
        _linear_params(params, rng, f"level{lvl}.2", h2, out)
    return params


def init_critic(cfg: RunConfig, seed=0):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    params = {}
    c_in = 1
    for i, c in enumerate(cfg.critic_channels):
        params[f"critic{i}.w"] = _param(_init(rng, (c, c_in), c_in))
        params[f"critic{i}.b"] = _param(np.zeros(c, dtype=np.float32))
        c_in = c
    return params


def global_dim(cfg: RunConfig):
    soft = cfg.has("no_distill") or cfg.gamma_mode == "soft"
    return cfg.feature_dim if soft else 2 * cfg.feature_dim


# ---------------------------------------------------------------- forward
def encode(params, cfg: RunConfig, grids):
    """(M, W, W, W) SDV grids -> (M, C) features."""
    x = grids if isinstance(grids, Tensor) else ag.tensor(grids)
    if x.ndim != 4:
        raise DimensionError(f"encode expects (M, W, W, W) grids, got {x.shape}")
    x = ag.reshape(x, (x.shape[0], 1) + x.shape[1:])
    for i, s in enumerate(cfg.encoder_strides):
        x = ag.conv3d(x, params[f"conv{i}.w"], params[f"conv{i}.b"], stride=s,
                      padding=cfg.padding)
        x = ag.leaky_relu(x, cfg.leaky_slope)
    m, c = x.shape[:2]
    return ag.mean(ag.reshape(x, (m, c, -1)), axis=2)


def encode_xyz(params, cfg: RunConfig, points):
    """Per-point MLP on raw coordinates (the no_lrf ablation)."""
    x = points if isinstance(points, Tensor) else ag.tensor(points)
    n = len(cfg.xyz_widths) + 1
    for i in range(n):
        x = ag.leaky_relu(_linear(params, f"xyz{i}", x), cfg.leaky_slope)
    return x


def heads(params, cfg: RunConfig, features):
    """Features (M, C) -> saliency (M,) in [0, 1] and unit embeddings (M, F)."""
    x = features
    for i in range(len(cfg.trunk_widths)):
        x = ag.leaky_relu(_linear(params, f"trunk{i}", x), cfg.leaky_slope)
    phi = ag.sigmoid(_linear(params, "saliency", x))
    phi = ag.reshape(phi, (phi.shape[0],))
    h = ag.l2_normalize(_linear(params, "embed", x), axis=-1)
    return phi, h


def decode(params, cfg: RunConfig, g):
    """Global feature (G,) or (B, G) -> points (N, 3) or (B, N, 3)."""
    single = g.ndim == 1
    if single:
        g = ag.reshape(g, (1, g.shape[0]))
    b, gdim = g.shape
    slope = cfg.leaky_slope
    x = ag.leaky_relu(_linear(params, "root0", g), slope)
    x = ag.leaky_relu(_linear(params, "root1", x), slope)
    x = ag.leaky_relu(_linear(params, "root2", x), slope)
    nodes = ag.reshape(x, (b, cfg.root_children, cfg.node_dim))
    depth = cfg.tree_depth()
    g3 = ag.reshape(g, (b, 1, gdim))
    for lvl in range(depth):
        n = nodes.shape[1]
        inp = ag.concat([nodes, ag.broadcast_to(g3, (b, n, gdim))], axis=2)
        y = ag.leaky_relu(_linear(params, f"level{lvl}.0", inp), slope)
        y = ag.leaky_relu(_linear(params, f"level{lvl}.1", y), slope)
        y = _linear(params, f"level{lvl}.2", y)
        if lvl == depth - 1:
            nodes = ag.reshape(y, (b, n * cfg.fanout, 3))
        else:
            nodes = ag.reshape(ag.leaky_relu(y, slope), (b, n * cfg.fanout, cfg.node_dim))
    if depth == 0:
        raise DimensionError("decoder needs at least one fan-out level")
    return ag.reshape(nodes, nodes.shape[1:]) if single else nodes


def critic_score(params, cfg: RunConfig, saliency):
    """Saliency vectors (N,) or (B, N) -> scores () or (B,). Permutation invariant."""
    x = saliency if isinstance(saliency, Tensor) else ag.tensor(saliency)
    single = x.ndim == 1
    if single:
        x = ag.reshape(x, (1, x.shape[0]))
    if x.shape[-1] < 1:
        raise DimensionError("critic needs at least one point")
    x = ag.reshape(x, (x.shape[0], 1, x.shape[1]))
    layers = len(cfg.critic_channels)
    for i in range(layers):
        x = ag.conv1d_pointwise(x, params[f"critic{i}.w"], params[f"critic{i}.b"])
        if i < layers - 1:
            x = ag.leaky_relu(x, cfg.leaky_slope)
    score = ag.reshape(ag.reduce_max_over_points(x), (x.shape[0],))
    return ag.reshape(score, ()) if single else score
