"""Alternating WGAN-GP training of the detector/reconstructor.

Each generator step draws ``centers_per_cloud`` points from every cloud in
the batch (mirror pairs are drawn together so the symmetry term has pairs to
compare), runs the generator once, and then

1. updates the critic ``critic_steps`` times on the detached saliencies
   against fresh Beta prior samples;
2. updates the generator on beta1 * L_recon + beta2 * L_GAN + beta3 * L_sym,
   with L_GAN scored by the freshly updated critic.

The reconstruction target is the full cloud. SDV grids are computed once per
cloud up front since the input clouds never change.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..autograd import Adam, TrainingError, load_arrays, save_arrays
from ..config import RunConfig
from ..geometry import symmetric_pairs
from ..model import Model, point_features
from ..model.prior import BetaPrior, sample_beta_prior
from .losses import critic_loss, generator_gan_loss, recon_loss, sparsity_l1, sym_loss

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "step", "l_recon", "l_gan_g", "l_gan_d", "l_sym", "grad_penalty",
                  "l_total")


@dataclass
class CloudState:
    name: str
    points: np.ndarray             # float64 (N, 3)
    grids: np.ndarray | None       # float32 (N, W, W, W) or None for no_lrf
    valid: np.ndarray
    pairs: np.ndarray              # (P, 2) mirror pairs


def prepare(model: Model, clouds):
    """Descriptor grids and mirror pairs for each training cloud."""
    cfg = model.cfg
    states = []
    for pc in clouds:
        grids, valid = point_features(model, pc.points)
        if pc.symmetry_plane is not None:
            pairs = np.asarray(symmetric_pairs(pc, tol=cfg.sym_tol), dtype=np.int64)
        else:
            pairs = np.zeros((0, 2), dtype=np.int64)
        states.append(CloudState(pc.name, pc.points, grids, valid, pairs.reshape(-1, 2)))
    return states


def sample_centers(state: CloudState, m, rng):
    """``m`` point indices and the mirror pairs among them (as local positions)."""
    n = len(state.points)
    if m >= n:
        idx = np.arange(n)
        return idx, state.pairs.copy()
    k = min(m // 2, len(state.pairs))
    chosen = state.pairs[np.sort(rng.choice(len(state.pairs), size=k, replace=False))] \
        if k else np.zeros((0, 2), dtype=np.int64)
    idx = chosen.reshape(-1)
    if len(idx) < m:
        rest = np.setdiff1d(np.arange(n), idx)
        idx = np.concatenate([idx, np.sort(rng.choice(rest, size=m - len(idx), replace=False))])
    local = np.arange(2 * k).reshape(-1, 2)
    return idx, local


class Trainer:
    def __init__(self, cfg: RunConfig, clouds, out_dir=None, model: Model | None = None):
        if not clouds:
            raise TrainingError("training set is empty")
        self.cfg = cfg
        self.model = model or Model(cfg)
        self.out_dir = out_dir
        self.states = prepare(self.model, clouds)
        self.targets = [ag.tensor(s.points) for s in self.states]
        self.rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
        self.prior = BetaPrior(cfg.prior_alpha, cfg.prior_beta)
        self.gen_opt = Adam(self.model.gen, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.critic_opt = Adam(self.model.critic, cfg.critic_lr, cfg.adam_beta1,
                               cfg.adam_beta2, cfg.adam_eps)
        self.step = 0
        self.epoch = 0
        self.history = []

    @property
    def use_gan(self):
        return not self.cfg.has("no_gan") and self.cfg.beta2 > 0

    @property
    def use_sym(self):
        return not self.cfg.has("no_sym") and self.cfg.beta3 > 0

    # --------------------------------------------------------------- step
    def _forward(self, batch):
        cfg, model = self.cfg, self.model
        m = min(cfg.centers_per_cloud, min(len(self.states[b].points) for b in batch))
        picks = [sample_centers(self.states[b], m, self.rng) for b in batch]
        if cfg.has("no_lrf"):
            pts = np.concatenate([self.states[b].points[i] for b, (i, _) in zip(batch, picks)])
            feats = model.features(points=pts.astype(np.float32))
        else:
            grids = np.concatenate([self.states[b].grids[i] for b, (i, _) in zip(batch, picks)])
            feats = model.features(grids=grids)
        phi, h = model.heads(feats)
        gs, phis, hs = [], [], []
        for k in range(len(batch)):
            rows = np.arange(k * m, (k + 1) * m)
            p_k, h_k = ag.take(phi, rows), ag.take(h, rows)
            phis.append(p_k)
            hs.append(h_k)
            gs.append(ag.reshape(model.pool(p_k, h_k), (1, -1)))
        pred = model.decode(ag.concat(gs, axis=0))
        return picks, phis, hs, pred, ag.reshape(phi, (len(batch), m))

    def train_step(self, batch):
        cfg, model = self.cfg, self.model
        self.step += 1
        picks, phis, hs, pred, fake = self._forward(batch)
        bsz, m = fake.shape

        l_gan_d = gp = None
        if self.use_gan:
            fake_np = fake.data.copy()
            critic = model.critic_score
            for _ in range(cfg.critic_steps):
                real = sample_beta_prior(self.prior, (bsz, m), self.rng)
                loss_d, _, gp = critic_loss(critic, real, fake_np, cfg.lambda_gp, self.rng)
                self.critic_opt.zero_grad()
                loss_d.backward()
                self.critic_opt.step()
                l_gan_d = float(loss_d.data)

        recon_terms = []
        for k in range(bsz):
            recon_terms.append(recon_loss(ag.reshape(ag.take(pred, [k], axis=0), (-1, 3)),
                                          self.targets[batch[k]]))
        l_recon = ag.mean(ag.concat([ag.reshape(t, (1,)) for t in recon_terms]))
        if self.use_gan:
            l_gan = generator_gan_loss(model.critic_score, fake)
        elif cfg.has("no_gan"):
            l_gan = sparsity_l1(fake)
        else:
            l_gan = ag.tensor(0.0)
        if self.use_sym:
            sym_terms = [sym_loss(phis[k], hs[k], picks[k][1]) for k in range(bsz)]
            l_sym = ag.mean(ag.concat([ag.reshape(t, (1,)) for t in sym_terms]))
        else:
            l_sym = ag.tensor(0.0)
        total = ag.add(ag.add(ag.scale(l_recon, cfg.beta1), ag.scale(l_gan, cfg.beta2)),
                       ag.scale(l_sym, cfg.beta3))
        if not np.isfinite(total.data):
            raise TrainingError(f"non-finite loss at epoch {self.epoch}, step {self.step}")
        self.gen_opt.zero_grad()
        total.backward()
        try:
            self.gen_opt.step()
        except TrainingError as exc:
            raise TrainingError(f"epoch {self.epoch}, step {self.step}: {exc}") from None
        row = {"epoch": self.epoch, "step": self.step, "l_recon": float(l_recon.data),
               "l_gan_g": float(l_gan.data), "l_gan_d": l_gan_d, "l_sym": float(l_sym.data),
               "grad_penalty": gp, "l_total": float(total.data)}
        self.history.append(row)
        return row

    # -------------------------------------------------------------- loop
    def train_epoch(self):
        self.epoch += 1
        order = self.rng.permutation(len(self.states))
        bs = self.cfg.batch_size
        rows = [self.train_step(order[s:s + bs].tolist()) for s in range(0, len(order), bs)]
        if self.out_dir is not None:
            self.save_checkpoint()
        return rows

    def fit(self, epochs=None, callback=None):
        epochs = self.cfg.epochs if epochs is None else epochs
        for _ in range(epochs):
            t0 = time.time()
            rows = self.train_epoch()
            mean = {k: np.mean([r[k] for r in rows if r[k] is not None] or [np.nan])
                    for k in ("l_recon", "l_gan_g", "l_gan_d", "l_sym")}
            log.info("epoch %d: recon %.5f gan_g %.4f gan_d %.4f sym %.4f (%.1fs)",
                     self.epoch, mean["l_recon"], mean["l_gan_g"], mean["l_gan_d"],
                     mean["l_sym"], time.time() - t0)
            if callback is not None:
                callback(self, rows)
        return self.model

    # ------------------------------------------------------- persistence
    def save_checkpoint(self):
        os.makedirs(self.out_dir, exist_ok=True)
        self.model.save(os.path.join(self.out_dir, "model.ukpf"))
        state = {"gen/" + k: v for k, v in self.gen_opt.state_arrays().items()}
        state.update({"critic/" + k: v for k, v in self.critic_opt.state_arrays().items()})
        state["epoch"] = np.asarray(self.epoch, dtype=np.float32)
        save_arrays(os.path.join(self.out_dir, "model.adam.ukpf"), state)
        write_metrics(os.path.join(self.out_dir, "metrics.csv"), self.history)

    def load_optimizer_state(self, path):
        arrays = load_arrays(path)
        for prefix, opt in (("gen/", self.gen_opt), ("critic/", self.critic_opt)):
            opt.load_state_arrays({k[len(prefix):]: v for k, v in arrays.items()
                                   if k.startswith(prefix)})
        self.epoch = int(arrays["epoch"])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(v)
    return "%.9g" % v


def write_metrics(path, rows):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])
    os.replace(tmp, path)


def train(clouds, cfg: RunConfig, out_dir=None, epochs=None, callback=None):
    """Train on ``clouds``; returns the trainer (model in ``trainer.model``)."""
    trainer = Trainer(cfg, clouds, out_dir)
    trainer.fit(epochs, callback)
    return trainer
