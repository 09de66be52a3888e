import csv
import math

import numpy as np
import pytest
import torch
import torch.nn as nn

from mlvgan.exceptions import CheckpointError, DivergenceError, GradientPathError, LabelError, ShapeError
from mlvgan.models.discriminator import SubDiscriminator
from mlvgan.services.checkpoint import CHECKPOINT_FORMAT_VERSION, FINAL_NAME, load_checkpoint, snapshot_name
from mlvgan.services.data import make_source
from mlvgan.services.training import (
    CONFIG_NAME,
    LOG_COLUMNS,
    LOG_NAME,
    Trainer,
    d_loss,
    g_loss,
    linear_decay,
    r1_penalty,
    snapshot_schedule,
    train,
)

from .conftest import tiny_config


def _batch(config, seed=1):
    return make_source(config.data).sample_batch(config.train.batch_size, np.random.default_rng(seed))


def _params(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def _weights(module):
    return {k: v.detach().clone() for k, v in module.named_parameters()}


def _same(a, b):
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


# ---------------------------------------------------------------- objective


def test_loss_closed_forms():
    zero = torch.zeros(1, dtype=torch.float64)
    assert float(d_loss(zero, zero)) == pytest.approx(2 * math.log(2), abs=1e-6)
    assert float(d_loss(torch.tensor([1.0]), torch.tensor([-1.0]))) == pytest.approx(0.6265234, abs=1e-6)
    assert float(g_loss(zero)) == pytest.approx(math.log(2), abs=1e-6)
    assert float(g_loss(torch.tensor([2.0, -2.0]))) == pytest.approx(1.1269280, abs=1e-6)


def test_loss_limits():
    big = torch.tensor([50.0])
    assert float(d_loss(big, -big)) < 1e-6
    assert float(g_loss(big)) < 1e-6
    assert float(g_loss(-big)) == pytest.approx(50.0, rel=1e-6)
    with pytest.raises(ShapeError):
        d_loss(torch.zeros(2), torch.zeros(3))


def test_penalty_of_linear_discriminator():
    a, weight = 0.5, 2.0
    x = torch.randn(3, 1, 2, 2, 2)
    penalty = r1_penalty([lambda v: a * v.flatten(1).sum(dim=1)], [x], weight)
    assert float(penalty) == pytest.approx(weight * 3 * a ** 2 * 8, rel=1e-6)


def test_penalty_of_constant_discriminator_is_zero():
    x = torch.randn(2, 1, 2, 2, 2)
    assert float(r1_penalty([lambda v: torch.zeros(v.shape[0])], [x], 1.0)) == 0.0
    assert float(r1_penalty([lambda v: 0.0 * v.flatten(1).sum(dim=1)], [x], 1.0)) == 0.0


def test_penalty_matches_finite_differences():
    torch.manual_seed(0)
    d = SubDiscriminator(1, [2]).double()
    assert sum(p.numel() for p in d.parameters()) <= 1000
    eps = 1e-6
    for seed in range(5):
        x = torch.randn(4, 1, 2, 4, 4, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))
        penalty = float(r1_penalty([d], [x], 1.0))

        flat = x.flatten()
        grad = torch.zeros_like(flat)
        with torch.no_grad():
            for i in range(flat.numel()):
                up, down = flat.clone(), flat.clone()
                up[i] += eps
                down[i] -= eps
                grad[i] = (d(up.view_as(x)).sum() - d(down.view_as(x)).sum()) / (2 * eps)
        assert penalty == pytest.approx(float(grad.pow(2).sum()), rel=1e-4)


def test_penalty_rejects_integer_inputs():
    with pytest.raises(GradientPathError):
        r1_penalty([lambda v: v.sum()], [torch.zeros(2, 1, 2, 2, 2, dtype=torch.long)], 1.0)


def test_linear_decay_and_snapshot_schedule():
    assert linear_decay(0, 100) == 1.0
    assert linear_decay(50, 100) == pytest.approx(0.5)
    assert linear_decay(100, 100) == 0.0
    assert linear_decay(150, 100) == 0.0
    assert snapshot_schedule(2000, 10000) == [2000, 4000, 6000, 8000, 10000]
    assert snapshot_schedule(3, 2) == []


# ---------------------------------------------------------------- trainer


def test_train_step_is_finite(config):
    trainer = Trainer(config, "cpu")
    real, labels = _batch(config)
    report = trainer.train_step(real, labels)
    assert report.iteration == 1 and trainer.iteration == 1
    assert report.is_finite
    assert len(report.real_logit_means) == config.model.levels
    assert report.lr == pytest.approx(config.train.lr)


def test_conditional_step_needs_labels(conditional_config):
    trainer = Trainer(conditional_config, "cpu")
    real, labels = _batch(conditional_config)
    with pytest.raises(LabelError):
        trainer.train_step(real)
    assert trainer.train_step(real, labels).is_finite


@pytest.mark.parametrize("kind", ["single-3d", "3d+2d"])
def test_baseline_discriminators_train(kind):
    config = tiny_config(model={"render_all_levels": False}, discriminator={"kind": kind, "channels": [4, 8]})
    trainer = Trainer(config, "cpu")
    real, labels = _batch(config)
    report = trainer.train_step(real, labels)
    assert report.is_finite
    assert len(report.real_logit_means) == (1 if kind == "single-3d" else 2)


@pytest.mark.parametrize("rate,frames", [(1, 16), (4, 4)])
def test_baseline_subsamples_real_and_fake_clips_alike(rate, frames):
    config = tiny_config(model={"rate": rate, "render_all_levels": False}, discriminator={"kind": "3d+2d"})
    trainer = Trainer(config, "cpu")
    real, _ = _batch(config)
    real_inputs = trainer._real_inputs(real)
    with torch.no_grad():
        fake_inputs = trainer._fake_inputs(2, None)
    expected = [(2, 1, frames, 16, 16), (2, 1, 16, 16)]
    assert [tuple(x.shape) for x in real_inputs] == expected
    assert [tuple(x.shape) for x in fake_inputs] == expected
    assert trainer.train_step(real).is_finite


def test_real_clips_of_the_wrong_size_are_rejected(config):
    trainer = Trainer(config, "cpu")
    pyramid = trainer._real_inputs(_batch(config)[0])
    with pytest.raises(ShapeError):
        trainer.discriminator.score(pyramid[::-1])


def test_updates_touch_only_their_own_network(config):
    trainer = Trainer(config, "cpu")
    real, _ = _batch(config)
    g_before, d_before = _weights(trainer.generator), _weights(trainer.discriminator)

    trainer.generator_step(real.shape[0])
    assert _same(d_before, _weights(trainer.discriminator))
    assert not _same(g_before, _weights(trainer.generator))
    assert all(p.requires_grad for p in trainer.discriminator.parameters())

    g_before = _weights(trainer.generator)
    trainer.discriminator_step(real)
    assert _same(g_before, _weights(trainer.generator))


def test_training_is_deterministic(config):
    real, labels = _batch(config)
    a, b = Trainer(config, "cpu"), Trainer(config, "cpu")
    for _ in range(2):
        ra, rb = a.train_step(real, labels), b.train_step(real, labels)
        assert ra.csv_row() == rb.csv_row()
    assert _same(_params(a.generator), _params(b.generator))


def test_snapshot_round_trip_continues_bitwise(config, tmp_path):
    real, labels = _batch(config)
    trainer = Trainer(config, "cpu")
    trainer.train_step(real, labels)
    path = trainer.snapshot(tmp_path / snapshot_name(1))

    restored = Trainer.restore(path, device="cpu")
    assert restored.iteration == 1
    assert _same(_params(trainer.generator), _params(restored.generator))
    assert trainer.train_step(real, labels).csv_row() == restored.train_step(real, labels).csv_row()
    assert _same(_params(trainer.discriminator), _params(restored.discriminator))


def test_restore_rejects_other_architectures(config, tmp_path):
    path = Trainer(config, "cpu").snapshot(tmp_path / "s.pt")
    other = tiny_config(model={"channels": [8, 8, 8, 4]})
    with pytest.raises(CheckpointError):
        Trainer.restore(path, other)


def test_unreadable_checkpoints(config, tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.pt")
    corrupt = tmp_path / "corrupt.pt"
    corrupt.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(corrupt)
    future = tmp_path / "future.pt"
    torch.save({"format_version": CHECKPOINT_FORMAT_VERSION + 1, "config": {}, "state": {}}, str(future))
    with pytest.raises(CheckpointError):
        load_checkpoint(future)


def test_learning_rate_reaches_zero(config):
    config = tiny_config(train={"max_iterations": 2})
    trainer = Trainer(config, "cpu")
    real, labels = _batch(config)
    first = trainer.train_step(real, labels)
    second = trainer.train_step(real, labels)
    assert first.lr == pytest.approx(config.train.lr)
    assert second.lr == pytest.approx(config.train.lr / 2)
    assert trainer.lr == 0.0


def test_divergence_reports_logit_means(config, monkeypatch):
    trainer = Trainer(config, "cpu")
    real, labels = _batch(config)
    monkeypatch.setattr(
        trainer.discriminator,
        "score",
        lambda inputs, label=None: [torch.full((x.shape[0],), math.nan) for x in inputs],
    )
    with pytest.raises(DivergenceError) as info:
        trainer.train_step(real, labels)
    assert set(info.value.logit_means) == {"real", "fake"}
    assert len(info.value.logit_means["real"]) == config.model.levels


# ---------------------------------------------------------------- run loop


def _log_rows(run_dir):
    with open(run_dir / LOG_NAME, newline="") as f:
        return list(csv.reader(f))


def test_run_writes_log_and_snapshots(config, tmp_path):
    trainer = train(config, tmp_path / "run")
    run_dir = tmp_path / "run"
    assert trainer.iteration == 4
    assert (run_dir / CONFIG_NAME).exists()
    assert (run_dir / FINAL_NAME).exists()
    assert (run_dir / snapshot_name(2)).exists() and (run_dir / snapshot_name(4)).exists()
    rows = _log_rows(run_dir)
    assert rows[0] == LOG_COLUMNS
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3, 4]


def test_runs_with_one_seed_log_identically(config, tmp_path):
    train(config, tmp_path / "a")
    train(config, tmp_path / "b")
    assert (tmp_path / "a" / LOG_NAME).read_text() == (tmp_path / "b" / LOG_NAME).read_text()


def test_resume_after_completion_is_a_no_op(config, tmp_path):
    run_dir = tmp_path / "run"
    train(config, run_dir)
    before = (run_dir / LOG_NAME).read_text()
    trainer = train(config, run_dir, resume=True)
    assert trainer.iteration == 4
    assert (run_dir / LOG_NAME).read_text() == before


def test_interrupted_run_resumes_to_the_same_log(config, tmp_path):
    full, cut = tmp_path / "full", tmp_path / "cut"
    train(config, full)
    train(config, cut)
    (cut / FINAL_NAME).unlink()
    (cut / snapshot_name(4)).unlink()
    trainer = train(config, cut, resume=True)
    assert trainer.iteration == 4
    assert (cut / LOG_NAME).read_text() == (full / LOG_NAME).read_text()


def test_resume_without_snapshot_fails(config, tmp_path):
    with pytest.raises(CheckpointError):
        train(config, tmp_path / "empty", resume=True)


# ---------------------------------------------------------------- slow checks


@pytest.mark.slow
def test_discriminator_learns_against_frozen_generator(config):
    config = tiny_config(train={"max_iterations": 200, "r1_weight": 0.0})
    trainer = Trainer(config, "cpu")
    source = make_source(config.data)
    rng = np.random.default_rng(0)
    losses = []
    for _ in range(200):
        real, labels = source.sample_batch(config.train.batch_size, rng)
        losses.append(trainer.train_step(real, labels, update_generator=False).d_loss)
    assert np.mean(losses[-20:]) < np.mean(losses[:20])


@pytest.mark.slow
def test_plain_gan_fits_a_gaussian():
    from scipy.stats import wasserstein_distance

    torch.manual_seed(0)
    g = nn.Sequential(nn.Linear(4, 32), nn.ReLU(), nn.Linear(32, 32), nn.ReLU(), nn.Linear(32, 1))
    d = nn.Sequential(nn.Linear(1, 32), nn.ReLU(), nn.Linear(32, 32), nn.ReLU(), nn.Linear(32, 1))
    g_opt = torch.optim.Adam(g.parameters(), lr=1e-3, betas=(0.5, 0.9))
    d_opt = torch.optim.Adam(d.parameters(), lr=1e-3, betas=(0.5, 0.9))
    batch = 128

    def score(x):
        return d(x).squeeze(1)

    for _ in range(5000):
        real = 2.0 + 0.5 * torch.randn(batch, 1)
        fake = g(torch.randn(batch, 4)).detach()
        loss = d_loss(score(real), score(fake)) + r1_penalty([score], [real], 0.1 / batch)
        d_opt.zero_grad()
        loss.backward()
        d_opt.step()

        loss = g_loss(score(g(torch.randn(batch, 4))))
        g_opt.zero_grad()
        loss.backward()
        g_opt.step()

    with torch.no_grad():
        samples = g(torch.randn(4000, 4)).squeeze(1).numpy()
    target = 2.0 + 0.5 * np.random.default_rng(0).standard_normal(4000)
    assert wasserstein_distance(samples, target) < 0.1
