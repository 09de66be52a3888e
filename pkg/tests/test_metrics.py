import math

import numpy as np
import pytest
import torch
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from mlvgan.exceptions import CheckpointError, EvaluationError, ShapeError
from mlvgan.models.embedder import VideoEmbedder
from mlvgan.services.data import make_source
from mlvgan.services.metrics import (
    EmbedderStats,
    embed_clips,
    embedder_accuracy,
    embedder_stats,
    fid,
    inception_score,
    psnr,
    ssim,
    train_embedder,
)


# ---------------------------------------------------------------- inception score


def test_inception_score_bounds():
    k = 5
    confident = np.eye(k)[np.arange(100) % k]
    mean, std = inception_score(confident)
    assert mean == pytest.approx(k, abs=1e-6) and std == 0.0
    mean, _ = inception_score(np.full((100, k), 1.0 / k))
    assert mean == pytest.approx(1.0, abs=1e-6)
    same = np.tile(np.array([[0.7, 0.2, 0.1]]), (10, 1))
    assert inception_score(same)[0] == pytest.approx(1.0, abs=1e-6)


def test_inception_score_splits():
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(4), size=60)
    mean, std = inception_score(probs, splits=3)
    assert 1.0 <= mean <= 4.0 and std >= 0.0
    with pytest.raises(ValueError):
        inception_score(probs, splits=0)
    with pytest.raises(EvaluationError):
        inception_score(probs * 2.0)
    with pytest.raises(ShapeError):
        inception_score(probs[0])


# ---------------------------------------------------------------- frechet distance


def _stats(mu, sigma):
    return EmbedderStats(np.asarray(mu, dtype=np.float64), np.asarray(sigma, dtype=np.float64))


def test_fid_closed_forms():
    a = _stats([0.0, 0.0], np.eye(2))
    assert fid(a, a) == pytest.approx(0.0, abs=1e-6)
    assert fid(a, _stats([1.0, 1.0], np.eye(2))) == pytest.approx(2.0, abs=1e-6)
    assert fid(a, _stats([0.0, 0.0], np.zeros((2, 2)))) == pytest.approx(2.0, abs=1e-6)
    assert fid(_stats([0.0], [[1.0]]), _stats([0.0], [[4.0]])) == pytest.approx(1.0, abs=1e-6)


def test_fid_is_symmetric_and_rejects_mismatches():
    rng = np.random.default_rng(1)
    a = embedder_stats(rng.normal(size=(200, 6)))
    b = embedder_stats(rng.normal(1.0, 2.0, size=(200, 6)))
    assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-6)
    assert fid(a, b) > 0.0
    with pytest.raises(ShapeError):
        fid(a, embedder_stats(rng.normal(size=(200, 5))))
    with pytest.raises(ShapeError):
        embedder_stats(rng.normal(size=(1, 6)))


def test_fid_shrinks_with_sample_size():
    rng = np.random.default_rng(2)

    def distance(n):
        return fid(embedder_stats(rng.normal(size=(n, 4))), embedder_stats(rng.normal(size=(n, 4))))

    assert distance(5000) < distance(50)


# ---------------------------------------------------------------- PSNR / SSIM


def test_psnr_values():
    x = torch.zeros(3, 8, 8)
    assert psnr(x, x + 0.2) == pytest.approx(20.0, abs=1e-6)
    assert psnr(x, x) == math.inf
    with pytest.raises(ShapeError):
        psnr(x, torch.zeros(3, 8, 7))


def test_psnr_agrees_with_skimage():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.uniform(-1, 1, size=(16, 16))
        b = np.clip(a + rng.normal(0, 0.1, size=a.shape), -1, 1)
        expected = peak_signal_noise_ratio((a + 1) / 2, (b + 1) / 2, data_range=1.0)
        assert psnr(a, b) == pytest.approx(expected, rel=1e-9)


def _reference_ssim(a, b, **kwargs):
    return structural_similarity(
        (a + 1) / 2,
        (b + 1) / 2,
        data_range=1.0,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        **kwargs,
    )


def test_ssim_agrees_with_skimage():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a = rng.uniform(-1, 1, size=(24, 24))
        b = np.clip(a + rng.normal(0, 0.3, size=a.shape), -1, 1)
        assert ssim(a, b) == pytest.approx(_reference_ssim(a, b), abs=1e-4)


def test_ssim_of_color_frames():
    rng = np.random.default_rng(5)
    a = rng.uniform(-1, 1, size=(3, 16, 16))
    b = np.clip(a + rng.normal(0, 0.2, size=a.shape), -1, 1)
    assert ssim(a, b) == pytest.approx(_reference_ssim(a, b, channel_axis=0), abs=1e-4)
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ShapeError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


# ---------------------------------------------------------------- embedder


def test_embedder_training_and_round_trip(config, tmp_path):
    embedder = train_embedder(config.data, config.evaluation, seed=0)
    clips, labels = make_source(config.data).sample_batch(6, np.random.default_rng(1))
    probs, feats = embed_clips(embedder, clips, batch_size=4)
    assert probs.shape == (6, config.data.toy.label_count)
    assert feats.shape[0] == 6
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-5)
    assert 0.0 <= embedder_accuracy(embedder, clips, labels) <= 1.0

    path = tmp_path / "embedder.pt"
    embedder.save(path)
    loaded = VideoEmbedder.load(path)
    assert np.allclose(embed_clips(loaded, clips, batch_size=4)[1], feats)
    with pytest.raises(CheckpointError):
        VideoEmbedder.load(tmp_path / "missing.pt")


def test_embedder_rejects_wrong_clip_shapes():
    embedder = VideoEmbedder(1, 16, 4, resolution=8)
    with pytest.raises(ShapeError):
        embedder.embed(torch.zeros(2, 3, 16, 8, 8))
