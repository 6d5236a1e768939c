import csv

import numpy as np
import pytest

import kpgan.autograd as ag
from kpgan.autograd import Tensor, TrainingError, precision
from kpgan.model import Model
from kpgan.model import network
from kpgan.training import (
    METRIC_COLUMNS, Trainer, critic_loss, generator_gan_loss, recon_loss, sample_centers,
    sparsity_l1, sym_loss, train,
)
from kpgan.training.trainer import CloudState
from gradcheck import numeric_grad, rel_err
from tiny import f64, rectangles, tiny_cfg

RNG = np.random.default_rng(5)


def read_metrics(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------- losses
def test_recon_loss_zero_on_identical_sets():
    p = RNG.normal(size=(10, 3))
    assert float(recon_loss(Tensor(p), Tensor(p[::-1].copy())).data) == 0.0


def test_critic_loss_constant_critic():
    def const(x):
        return ag.add(ag.scale(ag.sum(x, axis=1), 0.0), 0.7)

    real, fake = RNG.random((3, 5)), RNG.random((3, 5))
    loss, w, gp = critic_loss(const, real, fake, lambda_gp=0.0)
    assert float(loss.data) == 0.0 and w == 0.0 and gp == 0.0
    # zero gradient everywhere gives a penalty of exactly (0 - 1)^2
    _, _, gp = critic_loss(const, real, fake, lambda_gp=1.0, rng=0)
    assert gp == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(ValueError):
        critic_loss(const, real, fake[:, :4])


def test_generator_gan_loss_constant_critic():
    def const(x):
        return ag.add(ag.scale(ag.sum(x, axis=1), 0.0), 0.7)

    assert float(generator_gan_loss(const, Tensor(RNG.random((2, 4)))).data) == \
        pytest.approx(-0.7)


def test_linear_critic_wasserstein_term():
    # D(x) = sum(x): W term is sum(fake) - sum(real) averaged over the batch
    def lin(x):
        return ag.sum(x, axis=1)

    real, fake = RNG.random((4, 6)), RNG.random((4, 6))
    _, w, gp = critic_loss(lin, real, fake, lambda_gp=1.0, rng=0)
    assert w == pytest.approx(fake.sum(1).mean() - real.sum(1).mean(), rel=1e-5)
    # gradient of sum is all ones: norm sqrt(6)
    assert gp == pytest.approx((np.sqrt(6) - 1) ** 2, rel=1e-5)


def test_gradient_penalty_parameter_gradient_matches_fd():
    cfg = tiny_cfg(critic_channels=(5, 1))
    base = Model(cfg, seed=2).critic
    names = sorted(base)
    real, fake = RNG.random((2, 7)), RNG.random((2, 7))

    def loss_of(*arrays):
        params = f64(base, **{n: Tensor(a, requires_grad=True) for n, a in zip(names, arrays)})
        loss, _, _ = critic_loss(lambda s: network.critic_score(params, cfg, s), real, fake,
                                 lambda_gp=1.0, rng=11)
        return loss, params

    arrays = [base[n].data.astype(np.float64) for n in names]
    with precision(np.float64):
        loss, params = loss_of(*arrays)
        analytic = ag.grad(loss, [params[n] for n in names])
        num = [numeric_grad(lambda *a: float(loss_of(*a)[0].data), arrays, i, h=1e-6)
               for i in range(len(names))]
    flat_a = np.concatenate([g.data.ravel() for g in analytic])
    flat_n = np.concatenate([g.ravel() for g in num])
    assert np.abs(flat_n).max() > 1e-3
    assert rel_err(flat_a, flat_n) < 1e-2


def test_sparsity_and_sym_examples():
    phi = Tensor([0.2, 0.4, 0.6])
    assert float(sparsity_l1(phi).data) == pytest.approx(0.4)
    h = Tensor([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    # pair (0, 2): |0.2 - 0.6| + 0; pair (0, 1): 0.2 + 2
    got = float(sym_loss(phi, h, [[0, 2], [0, 1]]).data)
    assert got == pytest.approx((0.4 + 2.2) / 2)
    assert float(sym_loss(phi, h, np.zeros((0, 2))).data) == 0.0


def test_sym_loss_gradcheck():
    from gradcheck import check
    pairs = [[0, 3], [1, 2]]
    phi, h = RNG.random(4), RNG.normal(size=(4, 3))
    assert check(lambda p, e: sym_loss(p, e, pairs), [phi, h], h=1e-6) < 1e-3


# ---------------------------------------------------------------- sampling
def test_sample_centers_keeps_mirror_pairs_together():
    n = 40
    pairs = np.array([[i, i + 20] for i in range(20)])
    state = CloudState("c", np.zeros((n, 3)), None, np.ones(n, bool), pairs)
    rng = np.random.default_rng(0)
    idx, local = sample_centers(state, 10, rng)
    assert len(idx) == 10 and len(np.unique(idx)) == 10
    assert len(local) == 5
    for a, b in local:
        assert [idx[a], idx[b]] in pairs.tolist()
    full, lp = sample_centers(state, 100, rng)
    np.testing.assert_array_equal(full, np.arange(n))
    np.testing.assert_array_equal(lp, pairs)


# ----------------------------------------------------------------- trainer
@pytest.fixture(scope="module")
def clouds():
    return rectangles(4, n_points=128)


def test_trainer_smoke_writes_checkpoint(tmp_path, clouds):
    cfg = tiny_cfg()
    trainer = train(clouds, cfg, out_dir=tmp_path, epochs=1)
    for name in ("model.ukpf", "model.cfg", "model.adam.ukpf", "metrics.csv"):
        assert (tmp_path / name).exists()
    rows = read_metrics(tmp_path / "metrics.csv")
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert len(rows) == 2                              # 4 clouds / batch 2
    assert all(r["l_gan_d"] != "" and r["grad_penalty"] != "" for r in rows)
    Model.load(tmp_path / "model.ukpf")
    assert trainer.epoch == 1


def test_total_is_weighted_sum_of_terms(tmp_path, clouds):
    cfg = tiny_cfg(beta1=3.0, beta2=0.5, beta3=2.0)
    rows = Trainer(cfg, clouds).train_epoch()
    for r in rows:
        total = np.float32(np.float32(3.0 * np.float32(r["l_recon"]))
                           + np.float32(0.5 * np.float32(r["l_gan_g"])))
        total = np.float32(total + np.float32(2.0 * np.float32(r["l_sym"])))
        assert r["l_total"] == pytest.approx(float(total), rel=1e-6, abs=1e-7)


def test_no_gan_swaps_in_l1(tmp_path, clouds):
    cfg = tiny_cfg(ablations=("no_gan",))
    trainer = Trainer(cfg, clouds, out_dir=tmp_path)
    trainer.train_epoch()
    rows = read_metrics(tmp_path / "metrics.csv")
    assert all(r["l_gan_d"] == "" and r["grad_penalty"] == "" for r in rows)
    assert all(0 < float(r["l_gan_g"]) < 1 for r in rows)


def test_training_is_bit_reproducible(tmp_path, clouds):
    cfg = tiny_cfg()
    for sub in ("a", "b"):
        train(clouds, cfg, out_dir=tmp_path / sub, epochs=2)
    for name in ("model.ukpf", "model.adam.ukpf", "metrics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_optimizer_state_round_trip(tmp_path, clouds):
    cfg = tiny_cfg()
    t1 = Trainer(cfg, clouds, out_dir=tmp_path)
    t1.train_epoch()
    t2 = Trainer(cfg, clouds, model=Model.load(tmp_path / "model.ukpf"))
    t2.load_optimizer_state(tmp_path / "model.adam.ukpf")
    assert t2.epoch == 1
    for k, v in t1.gen_opt.state_arrays().items():
        np.testing.assert_array_equal(t2.gen_opt.state_arrays()[k], v)


def test_nonfinite_loss_aborts_with_context(clouds):
    trainer = Trainer(tiny_cfg(), clouds)
    trainer.model.gen["root2.b"].data[:] = np.nan
    with pytest.raises(TrainingError, match="epoch 1, step 1"):
        trainer.train_epoch()


def test_empty_training_set():
    with pytest.raises(TrainingError):
        Trainer(tiny_cfg(), [])


def test_reconstruction_improves_on_rectangles(clouds):
    cfg = tiny_cfg(ablations=("no_gan",), n_output=32, lr=3e-3)
    trainer = Trainer(cfg, clouds[:2])
    first = np.mean([r["l_recon"] for r in trainer.train_epoch()])
    for _ in range(40):
        rows = trainer.train_epoch()
    assert np.mean([r["l_recon"] for r in rows]) < 0.5 * first
