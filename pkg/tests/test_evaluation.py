import csv
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from mlvgan.exceptions import EvaluationError, ShapeError
from mlvgan.models.embedder import VideoEmbedder
from mlvgan.models.generator import MultiLevelGenerator
from mlvgan.models.presets import get_preset
from mlvgan.services import evaluation
from mlvgan.services.data import make_source
from mlvgan.services.evaluation import (
    CONSISTENCY_COLUMNS,
    SCORE_COLUMNS,
    evaluate_snapshots,
    level_consistency,
    score_generator,
    write_consistency_csv,
    write_score_table,
)
from mlvgan.services.metrics import real_stats, train_embedder
from mlvgan.services.training import LOG_NAME, Trainer, train

from .conftest import tiny_config


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("run")
    train(tiny_config(), path)
    return path


@pytest.fixture
def embedder():
    torch.manual_seed(0)
    return VideoEmbedder(1, 16, 4, resolution=8).eval()


def test_consistency_curves_are_finite(config, tmp_path):
    torch.manual_seed(0)
    generator = MultiLevelGenerator(config.model)
    curves = level_consistency(generator, 4, batch_size=3)
    assert len(curves.psnr_mean) == config.model.frames
    assert all(math.isfinite(v) for v in curves.ssim_mean + curves.ssim_ci + curves.psnr_ci)

    path = write_consistency_csv(curves, tmp_path / "consistency.csv")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == CONSISTENCY_COLUMNS
    assert len(rows) == config.model.frames + 1


def test_consistent_levels_score_perfectly(config, monkeypatch):
    generator = MultiLevelGenerator(config.model)

    def dense_levels(z, labels=None):
        low = torch.rand(z.shape[0], 1, 16, 2, 2) * 2 - 1
        high = F.interpolate(low, scale_factor=(1, 8, 8), mode="nearest")
        return [low, high]

    monkeypatch.setattr(generator, "dense_levels", dense_levels)
    curves = level_consistency(generator, 3)
    assert curves.ssim_mean == pytest.approx([1.0] * 16)
    assert all(v == math.inf for v in curves.psnr_mean)
    assert curves.psnr_ci == [0.0] * 16


def test_consistency_needs_every_level():
    config = tiny_config(model={"render_all_levels": False}, discriminator={"kind": "single-3d"})
    generator = MultiLevelGenerator(config.model)
    with pytest.raises(ShapeError):
        level_consistency(generator, 2)


def test_evaluation_needs_an_embedder_and_snapshots(config, embedder, tmp_path):
    with pytest.raises(EvaluationError):
        evaluate_snapshots(tmp_path, config.evaluation, None, config)
    with pytest.raises(EvaluationError):
        evaluate_snapshots(tmp_path, config.evaluation, embedder, config)


def test_every_snapshot_on_the_stride_is_scored(run_dir, embedder, config):
    result = evaluate_snapshots(run_dir, config.evaluation, embedder, config)
    assert [row.iteration for row in result.rows] == [2, 4]
    assert all(row.is_mean >= 1.0 and row.fid_mean >= 0.0 for row in result.rows)
    assert result.best in result.rows


def test_single_snapshot_is_selected(run_dir, embedder, config):
    protocol = config.evaluation.model_copy(update={"snapshot_stride": 4})
    result = evaluate_snapshots(run_dir, protocol, embedder, config)
    assert len(result.rows) == 1
    assert result.best.iteration == 4


def test_ties_go_to_the_earliest_snapshot(run_dir, embedder, config, monkeypatch):
    monkeypatch.setattr(evaluation, "score_generator", lambda *args, **kwargs: (2.0, 0.0, 1.0, 0.0))
    result = evaluate_snapshots(run_dir, config.evaluation, embedder, config)
    assert result.best.iteration == 2


def test_largest_inception_score_wins(run_dir, embedder, config, monkeypatch):
    scores = iter([(1.5, 0.1, 3.0, 0.2), (2.5, 0.1, 4.0, 0.2)])
    monkeypatch.setattr(evaluation, "score_generator", lambda *args, **kwargs: next(scores))
    result = evaluate_snapshots(run_dir, config.evaluation, embedder, config)
    assert result.best.iteration == 4
    assert result.best.fid_mean == 4.0


def test_score_table_layout(tmp_path):
    rows = [evaluation.ScoreRow(2000, 3.0, 0.1, 12.5, 0.5), evaluation.ScoreRow(4000, 3.5, 0.2, 10.0, 0.4)]
    path = write_score_table(rows, tmp_path / "scores.csv")
    with open(path, newline="") as f:
        table = list(csv.reader(f))
    assert table[0] == SCORE_COLUMNS
    assert [int(r[0]) for r in table[1:]] == [2000, 4000]
    assert np.allclose([float(v) for v in table[1][1:]], [3.0, 0.1, 12.5, 0.5])


# ---------------------------------------------------------------- experiments


@pytest.fixture(scope="module")
def desk():
    return get_preset("desk-16px")


@pytest.fixture(scope="module")
def desk_embedder(desk):
    return train_embedder(desk.data, desk.evaluation, seed=0)


def _reference(config, embedder):
    protocol = config.evaluation
    return real_stats(embedder, make_source(config.data), protocol.samples,
                      np.random.default_rng(0), protocol.batch_size)


def _toy_fid(generator, embedder, reference, config) -> float:
    return score_generator(generator, embedder, reference, config.evaluation)[2]


@pytest.mark.slow
def test_training_lowers_toy_fid(desk, desk_embedder, tmp_path):
    reference = _reference(desk, desk_embedder)
    before = _toy_fid(Trainer(desk, "cpu").generator, desk_embedder, reference, desk)

    train(desk, tmp_path)
    with open(tmp_path / LOG_NAME, newline="") as f:
        log = list(csv.DictReader(f))
    assert len(log) == desk.train.max_iterations
    assert all(math.isfinite(float(row[c])) for row in log for c in ("d_loss", "g_loss", "r1"))

    result = evaluate_snapshots(tmp_path, desk.evaluation, desk_embedder, desk)
    final = result.rows[-1]
    assert final.iteration == desk.train.max_iterations
    assert final.fid_mean <= 0.7 * before


@pytest.mark.slow
def test_subsampling_beats_naive_training(desk, desk_embedder, tmp_path):
    reference = _reference(desk, desk_embedder)
    wins = 0
    for seed in range(5):
        fids = {}
        for rate in (2, 1):
            config = desk.model_copy(update={
                "model": desk.model.model_copy(update={"rate": rate}),
                "train": desk.train.model_copy(update={"seed": seed}),
            })
            trainer = train(config, tmp_path / f"rate{rate}_seed{seed}")
            fids[rate] = _toy_fid(trainer.generator, desk_embedder, reference, config)
        wins += fids[2] < fids[1]
    assert wins >= 4
