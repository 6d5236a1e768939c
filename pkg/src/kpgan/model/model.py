"""Model bundle: config plus generator and critic parameters, with checkpointing."""
from __future__ import annotations

import os

import numpy as np

from .. import autograd as ag
from ..autograd import CheckpointError, load_arrays, save_arrays
from ..config import ConfigError, RunConfig, load_config
from . import network
from .distill import distill, distill_soft


def config_path(checkpoint):
    return os.path.splitext(str(checkpoint))[0] + ".cfg"


class Model:
    def __init__(self, cfg: RunConfig, seed=None):
        self.cfg = cfg
        seed = cfg.seed if seed is None else seed
        self.gen = network.init_generator(cfg, seed)
        self.critic = network.init_critic(cfg, seed)

    # ------------------------------------------------------------ forward
    def features(self, grids=None, points=None):
        if self.cfg.has("no_lrf"):
            return network.encode_xyz(self.gen, self.cfg, points)
        return network.encode(self.gen, self.cfg, grids)

    def heads(self, features):
        return network.heads(self.gen, self.cfg, features)

    def pool(self, saliency, embeddings):
        cfg = self.cfg
        if cfg.has("no_distill"):
            return distill_soft(saliency, embeddings, 1.0)
        if cfg.gamma_mode == "soft":
            return distill_soft(saliency, embeddings, cfg.gamma)
        return distill(saliency, embeddings)

    def decode(self, g):
        return network.decode(self.gen, self.cfg, g)

    def critic_score(self, saliency):
        return network.critic_score(self.critic, self.cfg, saliency)

    def saliency(self, grids=None, points=None, chunk=1024):
        """Inference: per-point (phi, h) as numpy arrays, computed in chunks."""
        n = len(grids) if grids is not None else len(points)
        phis, hs = [], []
        with ag.no_grad():
            for s in range(0, n, chunk):
                sl = slice(s, s + chunk)
                f = self.features(None if grids is None else grids[sl],
                                  None if points is None else points[sl])
                phi, h = self.heads(f)
                phis.append(phi.data)
                hs.append(h.data)
        return np.concatenate(phis), np.concatenate(hs)

    # ---------------------------------------------------------- storage
    def arrays(self):
        out = {"gen/" + k: v.data for k, v in self.gen.items()}
        out.update({"critic/" + k: v.data for k, v in self.critic.items()})
        return out

    def save(self, path):
        save_arrays(path, self.arrays())
        tmp = config_path(path) + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(self.cfg.to_text())
        os.replace(tmp, config_path(path))

    def load_arrays(self, arrays, source="<arrays>"):
        for prefix, params in (("gen/", self.gen), ("critic/", self.critic)):
            for k, p in params.items():
                key = prefix + k
                if key not in arrays:
                    raise CheckpointError(f"{source}: missing parameter '{key}'")
                a = arrays[key]
                if a.shape != p.data.shape:
                    raise CheckpointError(f"{source}: parameter '{key}' has shape {a.shape}, "
                                          f"model expects {p.data.shape}")
                p.data = a.astype(np.float32).copy()
        return self

    @classmethod
    def load(cls, path, cfg: RunConfig | None = None):
        """Rebuild from ``path`` and the ``.cfg`` written next to it."""
        if cfg is None:
            cpath = config_path(path)
            if not os.path.exists(cpath):
                raise CheckpointError(f"{path}: no model config at {cpath}")
            try:
                cfg = load_config(cpath)
            except ConfigError as exc:
                raise CheckpointError(f"{cpath}: {exc}") from None
        model = cls(cfg)
        return model.load_arrays(load_arrays(path), str(path))
