"""Acceptance suite, one PASS/FAIL line per criterion.

The lines are printed as each test runs and again as a block in the pytest
terminal summary. Criteria 3, 4, 5, 9 and 10 need trained desk-scale models
(configs/desk.cfg). Those are trained on first use and cached under
``.acceptance_cache/`` (or ``$KPGAN_ACCEPTANCE_CACHE``), keyed by the config
text and a hash of the package sources, so a rerun with unchanged code only
re-evaluates. Delete the cache to retrain.
"""
import functools
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import kpgan.autograd as ag
from kpgan.autograd import Tensor, precision
from kpgan.config import load_config
from kpgan.data import downsample, make_corpus
from kpgan.geometry import (
    NMS_RADIUS, chamfer_distance, chamfer_loss, compute_sdv_all, nms, radius_neighbors_all,
    symmetric_pairs,
)
from kpgan.metrics import (
    correspondence_iou, greedy_match, keypoint_miou, repeatability_fraction,
    rotation_repeatability, top_k_by_score,
)
from kpgan.model import BetaPrior, Model, distill, distill_soft, network, sample_beta_prior
from kpgan.model.detect import run_model
from kpgan.training import Trainer, critic_loss

from acceptance_log import record
from gradcheck import check, numeric_grad, rel_err
from tiny import f64, rectangles, tiny_cfg

ROOT = Path(__file__).resolve().parents[1]
DESK = ROOT / "configs" / "desk.cfg"
CACHE = Path(os.environ.get("KPGAN_ACCEPTANCE_CACHE", ROOT / ".acceptance_cache"))
RECT = ("rectangle",)
BOX_TABLE = ("box", "table")


# ------------------------------------------------------------ trained models
@functools.lru_cache(maxsize=None)
def corpus(families):
    return make_corpus(list(families), per_family=84, seed=0)


def clouds(families, split, family=None):
    return [it.cloud for it in corpus(families)
            if it.split == split and (family is None or it.family == family)]


@functools.lru_cache(maxsize=None)
def source_digest():
    """Hash of the package sources, so a code change invalidates cached models."""
    h = hashlib.sha1()
    pkg = ROOT / "src" / "kpgan"
    for path in sorted(list(pkg.rglob("*.py")) + list(pkg.rglob("*.pyx"))):
        h.update(path.relative_to(pkg).as_posix().encode())
        h.update(path.read_bytes())
    return h.hexdigest()


@functools.lru_cache(maxsize=None)
def trained(families, ablation=None):
    """(model, training seconds) for the desk config on the train split of ``families``."""
    cfg = load_config(DESK, {"ablations": ablation} if ablation else None)
    key = f"{cfg.to_text()}|{','.join(families)}|{source_digest()}"
    key = hashlib.sha1(key.encode()).hexdigest()[:10]
    out = CACHE / f"{'+'.join(families)}-{ablation or 'full'}-{key}"
    done = out / "done.json"
    if done.exists():
        return Model.load(out / "model.ukpf"), json.loads(done.read_text())["seconds"]
    t0 = time.time()
    trainer = Trainer(cfg, clouds(families, "train"), out_dir=out)
    trainer.fit()
    seconds = time.time() - t0
    done.write_text(json.dumps({"seconds": seconds, "epochs": trainer.epoch}))
    return trainer.model, seconds


@functools.lru_cache(maxsize=None)
def saliency_on_test(families, ablation=None, family=None):
    """Per-cloud (phi, valid) of a trained model on the test split."""
    model, _ = trained(families, ablation)
    out = []
    for pc in clouds(families, "test", family):
        phi, _, valid = run_model(model, pc)
        out.append((phi.astype(np.float64), valid))
    return out


def ranked(model, points, k):
    """Top ``k`` valid points by saliency after NMS."""
    phi, _, valid = run_model(model, points)
    return top_k_by_score(phi, valid, k, points=points, nms_radius=NMS_RADIUS)


def outside_fraction(saliency):
    phi = np.concatenate([p[v] for p, v in saliency])
    return float(np.mean((phi <= 0.2) | (phi >= 0.8)))


# ------------------------------------------------------------- criterion 1
def _op_cases():
    rng = np.random.default_rng(100)
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4,))
    pos = rng.uniform(0.5, 2.0, size=(3, 4))
    away = rng.choice([-1, 1], size=(3, 4)) * rng.uniform(0.2, 1.5, size=(3, 4))
    w = Tensor(rng.normal(size=(3, 4)))

    def lin(t):
        return ag.sum(ag.mul(t, w))

    def sq(t):
        return ag.sum(ag.square(t))

    return {
        "add": (lambda x, y: lin(ag.add(x, y)), [a, b]),
        "sub": (lambda x, y: lin(ag.sub(x, y)), [a, b]),
        "mul": (lambda x, y: lin(ag.mul(x, y)), [a, b]),
        "div": (lambda x, y: lin(ag.div(x, y)), [a, pos]),
        "neg": (lambda x: lin(ag.neg(x)), [a]),
        "scale": (lambda x: lin(ag.scale(x, -1.7)), [a]),
        "abs": (lambda x: lin(ag.abs(x)), [away]),
        "square": (lambda x: lin(ag.square(x)), [a]),
        "sqrt": (lambda x: lin(ag.sqrt(x)), [pos]),
        "sigmoid": (lambda x: lin(ag.sigmoid(x)), [a]),
        "relu": (lambda x: lin(ag.relu(x)), [away]),
        "leaky_relu": (lambda x: lin(ag.leaky_relu(x, 0.2)), [away]),
        "signed_power": (lambda x: lin(ag.signed_power(x, 3.0)), [away]),
        "sum": (lambda x: sq(ag.sum(x, axis=1)), [a]),
        "mean": (lambda x: sq(ag.mean(x, axis=0)), [a]),
        "max": (lambda x: sq(ag.max(x, axis=1)), [rng.permutation(12).reshape(3, 4) * 0.3]),
        "reshape": (lambda x: sq(ag.mul(ag.reshape(x, (4, 3)), Tensor(np.arange(12.0).reshape(4, 3)))), [a]),
        "transpose": (lambda x: sq(ag.mul(ag.transpose(x), Tensor(np.arange(12.0).reshape(4, 3)))), [a]),
        "broadcast_to": (lambda y: lin(ag.square(ag.broadcast_to(y, (3, 4)))), [b]),
        "sum_to": (lambda x: sq(ag.sum_to(x, (1, 4))), [a]),
        "take": (lambda x: sq(ag.take(x, [2, 0, 2], axis=0)), [a]),
        "index_add": (lambda y: lin(ag.square(ag.index_add(y, [2, 0, 2], 0, (3, 4)))),
                      [rng.normal(size=(3, 4))]),
        "concat": (lambda x, y: sq(ag.mul(ag.concat([x, ag.reshape(y, (1, 4))], axis=0),
                                          Tensor(np.arange(16.0).reshape(4, 4)))), [a, b]),
        "matmul": (lambda x, y: sq(ag.matmul(x, y)), [a, rng.normal(size=(4, 2))]),
        "conv1d_pointwise": (lambda x, k, c: sq(ag.conv1d_pointwise(x, k, c)),
                             [rng.normal(size=(2, 3, 5)), rng.normal(size=(4, 3)),
                              rng.normal(size=(4,))]),
        "conv3d": (lambda x, k, c: ag.scale(sq(ag.conv3d(x, k, c, stride=2, padding=1)), 0.1),
                   [rng.normal(size=(2, 2, 4, 4, 4)), rng.normal(size=(3, 2, 3, 3, 3)),
                    rng.normal(size=(3,))]),
        "reduce_max_over_points": (
            lambda x: lin(ag.reduce_max_over_points(x)),
            [rng.permutation(48).reshape(3, 4, 4) * 0.1]),
        "l2_normalize": (lambda x: lin(ag.l2_normalize(x)), [a]),
    }


def _pipeline_error():
    cfg = tiny_cfg(lrf_radius=0.9)
    model = Model(cfg)
    pts = rectangles(1, n_points=64)[0].points[::4]           # 16 points
    grids, _ = compute_sdv_all(pts, cfg.lrf_radius, cfg.grid_size)
    names = ["conv0.w", "conv6.w", "trunk0.w", "saliency.w", "embed.w", "level2.2.b"]
    arrays = [model.gen[n].data.astype(np.float64) for n in names]

    def build(*ts):
        params = f64(model.gen, **dict(zip(names, ts)))
        feats = network.encode(params, cfg, Tensor(grids.astype(np.float64)))
        phi, h = network.heads(params, cfg, feats)
        pred = network.decode(params, cfg, distill(phi, h))
        return ag.add(chamfer_loss(pred, Tensor(pts)), ag.mean(phi))

    return check(build, arrays, h=1e-6)


def test_criterion_01_gradient_integrity():
    t0 = time.time()
    errs = {name: check(build, arrays, h=1e-6) for name, (build, arrays) in _op_cases().items()}
    worst_op = max(errs, key=errs.get)
    pipe = _pipeline_error()
    seconds = time.time() - t0
    ok = errs[worst_op] < 1e-3 and pipe < 1e-2 and seconds < 60
    record(1, ok, "criterion 1 gradient integrity",
           f"{len(errs)} ops, worst {worst_op} rel err {errs[worst_op]:.2e} (< 1e-3); "
           f"16-point pipeline {pipe:.2e} (< 1e-2); {seconds:.1f}s (< 60s)")
    assert ok


# ------------------------------------------------------------- criterion 2
def test_criterion_02_gradient_penalty():
    rng = np.random.default_rng(101)
    cfg = tiny_cfg(critic_channels=(5, 1))                   # two layers
    base = Model(cfg, seed=2).critic
    names = sorted(base)
    real, fake = rng.random((2, 7)), rng.random((2, 7))

    def loss_of(*arrays):
        params = f64(base, **{n: Tensor(a, requires_grad=True) for n, a in zip(names, arrays)})
        # penalty alone: lambda (|grad D| - 1)^2 at the interpolates
        total, _, _ = critic_loss(lambda s: network.critic_score(params, cfg, s), real, fake,
                                  lambda_gp=1.0, rng=11)
        w_only, _, _ = critic_loss(lambda s: network.critic_score(params, cfg, s), real, fake,
                                   lambda_gp=0.0, rng=11)
        return ag.sub(total, w_only), params

    arrays = [base[n].data.astype(np.float64) for n in names]
    with precision(np.float64):
        loss, params = loss_of(*arrays)
        analytic = ag.grad(loss, [params[n] for n in names], allow_unused=True)
        num = [numeric_grad(lambda *a: float(loss_of(*a)[0].data), arrays, i, h=1e-6)
               for i in range(len(names))]
    flat_a = np.concatenate([np.zeros(arrays[i].size) if g is None else g.data.ravel()
                             for i, g in enumerate(analytic)])
    flat_n = np.concatenate([g.ravel() for g in num])
    err = rel_err(flat_a, flat_n)
    ok = err < 1e-2 and np.abs(flat_n).max() > 1e-4
    record(2, ok, "criterion 2 gradient penalty",
           f"parameter gradient rel err {err:.2e} vs float64 FD (< 1e-2), "
           f"max |grad| {np.abs(flat_n).max():.3f}")
    assert ok


# ------------------------------------------------------------- criterion 3
@pytest.mark.slow
def test_criterion_03_rotation_repeatability():
    model, train_s = trained(BOX_TABLE)
    nolrf, _ = trained(BOX_TABLE, "no_lrf")
    test = clouds(BOX_TABLE, "test")
    t0 = time.time()
    full = [rotation_repeatability(lambda p: ranked(model, p, 4), pc, 4, 0.1, 20, seed=i)
            for i, pc in enumerate(test)]
    eval_s = time.time() - t0
    ablated = [rotation_repeatability(lambda p: ranked(nolrf, p, 4), pc, 4, 0.1, 20, seed=i)
               for i, pc in enumerate(test)]
    rep, rep_ab = float(np.mean(full)), float(np.mean(ablated))
    runtime = train_s + eval_s
    ok = rep >= 95 and rep_ab < 50 and runtime <= 30 * 60
    record(3, ok, "criterion 3 rotation repeatability",
           f"full {rep:.1f}% (>= 95), no_lrf {rep_ab:.1f}% (< 50) over {len(test)} test "
           f"clouds x 20 rotations; train {train_s / 60:.1f} min + eval {eval_s / 60:.1f} min "
           f"(<= 30 min)")
    assert ok


# ------------------------------------------------------------- criterion 4
@pytest.mark.slow
def test_criterion_04_corner_recovery():
    model, _ = trained(RECT)
    test = clouds(RECT, "test")
    hits = [keypoint_miou(ranked(model, pc.points, 4), pc.gt_keypoints, pc, 0.1) == 1.0
            for pc in test]
    frac = float(np.mean(hits))
    ok = frac >= 0.9
    record(4, ok, "criterion 4 corner recovery",
           f"all 4 corners matched within geodesic 0.1 on {sum(hits)}/{len(test)} test "
           f"rectangles = {100 * frac:.1f}% (>= 90%)")
    assert ok


# ------------------------------------------------------------- criterion 5
@pytest.mark.slow
def test_criterion_05_sparsity_bimodality():
    gan = saliency_on_test(RECT)
    l1 = saliency_on_test(RECT, "no_gan")
    out_gan, out_l1 = outside_fraction(gan), outside_fraction(l1)
    hi_gan = float(np.mean(np.concatenate([p[v] for p, v in gan]) >= 0.8))
    hi_l1 = float(np.mean(np.concatenate([p[v] for p, v in l1]) >= 0.8))
    ok = out_gan >= 0.8 and out_l1 < 0.8
    record(5, ok, "criterion 5 sparsity bimodality",
           f"mass outside (0.2, 0.8): GAN {100 * out_gan:.1f}% (>= 80), no_gan "
           f"{100 * out_l1:.1f}% (must be < 80)")
    # the literal mass test cannot tell "all near 0" from "near 0 and 1"
    record("5b", None, "criterion 5 reading",
           f"mass >= 0.8: GAN {100 * hi_gan:.2f}%, no_gan {100 * hi_l1:.2f}% "
           f"(the prior puts {100 / 6:.1f}% of its mass near 1)")
    assert ok


@pytest.mark.slow
def test_invariant_no_gan_max_below_half_gan_max():
    gan = max(p[v].max() for p, v in saliency_on_test(RECT))
    l1 = max(p[v].max() for p, v in saliency_on_test(RECT, "no_gan"))
    ok = l1 < 0.5 * gan
    record("inv-a", ok, "invariant no_gan max saliency < 0.5 x GAN max",
           f"no_gan {l1:.3f}, GAN {gan:.3f}")
    assert ok


# ------------------------------------------------------------- criterion 6
def _brute_distill(phi, h):
    n, f = h.shape
    pos = [max(phi[x] * max(h[x, j], 0.0) for x in range(n)) for j in range(f)]
    neg = [max(phi[x] * max(-h[x, j], 0.0) for x in range(n)) for j in range(f)]
    return np.array(pos + neg)


def test_criterion_06_distillation_oracle():
    rng = np.random.default_rng(106)
    worst_hard = worst_soft = 0.0
    with precision(np.float64):
        for _ in range(1000):
            n, f = int(rng.integers(1, 20)), int(rng.integers(1, 6))
            phi, h = rng.random(n), rng.normal(size=(n, f))
            got = distill(Tensor(phi), Tensor(h)).data
            worst_hard = max(worst_hard, float(np.abs(got - _brute_distill(phi, h)).max()))
            # at gamma = 1 the soft pool is the saliency-weighted mean of h
            soft = distill_soft(Tensor(phi), Tensor(h), 1.0).data
            expect = np.array([sum(phi[x] * h[x, j] for x in range(n)) / sum(phi)
                               for j in range(f)])
            worst_soft = max(worst_soft, float(np.abs(soft - expect).max()))
    ok = worst_hard <= 1e-6 and worst_soft <= 1e-6
    record(6, ok, "criterion 6 distillation oracle",
           f"1000 instances: hard max |diff| {worst_hard:.1e}, soft gamma=1 max |diff| "
           f"{worst_soft:.1e} (<= 1e-6)")
    assert ok


# ------------------------------------------------------------- criterion 7
def test_criterion_07_beta_sampler():
    x = sample_beta_prior(BetaPrior(0.01, 0.05), 100_000, seed=107).astype(np.float64)
    mean, mid = float(x.mean()), float(np.mean((x > 0.2) & (x < 0.8)))
    ok = abs(mean - 1 / 6) <= 0.01 and mid < 0.05
    record(7, ok, "criterion 7 beta sampler",
           f"mean {mean:.4f} vs 1/6 = {1 / 6:.4f} (within 0.01); in (0.2, 0.8) "
           f"{100 * mid:.2f}% (< 5%)")
    assert ok


# ------------------------------------------------------------- criterion 8
def _brute_nms(pts, scores, radius):
    alive = list(range(len(pts)))
    kept = []
    while alive:
        best = min(alive, key=lambda i: (-scores[i], i))
        kept.append(best)
        alive = [i for i in alive if np.sum((pts[i] - pts[best]) ** 2) > radius * radius]
    return kept


def _brute_chamfer(a, b):
    ab = np.mean([min(np.sum((p - q) ** 2) for q in b) for p in a])
    ba = np.mean([min(np.sum((p - q) ** 2) for q in a) for p in b])
    return ab + ba


def _brute_radius(pts, r):
    return [[j for j in range(len(pts)) if np.sum((pts[i] - pts[j]) ** 2) <= r * r]
            for i in range(len(pts))]


def _brute_repeat(a, b, thr):
    if len(b) == 0:
        return 0.0
    return sum(min(np.sum((p - q) ** 2) for q in b) <= thr * thr for p in a) / len(a)


def _brute_greedy(dist, thr):
    pairs = sorted((dist[r, c], r, c) for r in range(dist.shape[0])
                   for c in range(dist.shape[1]) if dist[r, c] <= thr)
    used_r, used_c, out = set(), set(), []
    for _, r, c in pairs:
        if r not in used_r and c not in used_c:
            used_r.add(r)
            used_c.add(c)
            out.append((r, c))
    return out


def test_criterion_08_metric_oracles():
    rng = np.random.default_rng(108)
    bad = {"nms": 0, "chamfer": 0, "radius": 0, "repeatability": 0, "matching": 0}
    for _ in range(100):
        n = int(rng.integers(1, 40))
        pts = np.round(rng.uniform(-1, 1, size=(n, 3)), 2)     # rounding makes ties likely
        scores = np.round(rng.random(n), 1)
        radius = float(rng.uniform(0.05, 0.8))
        bad["nms"] += list(nms(pts, scores, radius)) != _brute_nms(pts, scores, radius)
        other = rng.normal(size=(int(rng.integers(1, 30)), 3))
        bad["chamfer"] += abs(chamfer_distance(pts, other) - _brute_chamfer(pts, other)) > 1e-6
        indptr, idx = radius_neighbors_all(pts, radius)
        got = [sorted(idx[indptr[i]:indptr[i + 1]].tolist()) for i in range(n)]
        bad["radius"] += got != _brute_radius(pts, radius)
        kb = other[: int(rng.integers(0, len(other) + 1))] * 0.3
        bad["repeatability"] += repeatability_fraction(pts, kb, 0.3) != _brute_repeat(pts, kb, 0.3)
        dist = np.round(rng.uniform(0, 0.2, size=(int(rng.integers(0, 7)),
                                                  int(rng.integers(1, 7)))), 2)
        bad["matching"] += greedy_match(dist, 0.1) != _brute_greedy(dist, 0.1)
    ok = not any(bad.values())
    record(8, ok, "criterion 8 metric oracles",
           "mismatches over 100 instances: " + ", ".join(f"{k} {v}" for k, v in bad.items()))
    assert ok


# ------------------------------------------------------------- criterion 9
def _pair_gap(families, ablation):
    cfg = load_config(DESK)
    gaps = []
    for pc, (phi, _) in zip(clouds(families, "test"), saliency_on_test(families, ablation)):
        pairs = np.asarray(symmetric_pairs(pc, tol=cfg.sym_tol), dtype=np.int64).reshape(-1, 2)
        gaps.append(np.abs(phi[pairs[:, 0]] - phi[pairs[:, 1]]))
    return float(np.mean(np.concatenate(gaps)))


@pytest.mark.slow
def test_criterion_09_symmetry_ablation_ordering():
    with_sym, without = _pair_gap(RECT, None), _pair_gap(RECT, "no_sym")
    ok = with_sym <= 0.5 * without
    record(9, ok, "criterion 9 symmetry ablation ordering",
           f"mean |phi_i - phi_j| over mirror pairs of test rectangles: with sym "
           f"{with_sym:.4f}, no_sym {without:.4f} (need ratio <= 0.5, got "
           f"{with_sym / max(without, 1e-12):.2f})")
    assert ok


# ------------------------------------------------------------ criterion 10
@pytest.mark.slow
def test_criterion_10_downsampling_stability():
    model, _ = trained(BOX_TABLE)
    scores = []
    for i, pc in enumerate(clouds(BOX_TABLE, "test", "table")):
        k = len(pc.gt_keypoints)
        small = downsample(pc, 512, seed=i)
        full_kp = ranked(model, pc.points, k)
        small_kp = ranked(model, small.points, k)
        scores.append(correspondence_iou(full_kp, small_kp, pc.correspondence_ids,
                                         small.correspondence_ids, on_collision="merge"))
    iou = float(np.mean(scores))
    ok = iou >= 70
    record(10, ok, "criterion 10 downsampling stability",
           f"correspondence IoU 2048 vs 512 points, top-8 keypoints, {len(scores)} test tables: "
           f"{iou:.1f}% (>= 70)")
    assert ok
