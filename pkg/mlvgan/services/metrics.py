"""
Sample-quality metrics.

Inception Score and Frechet distance over embedder outputs, PSNR and SSIM
between frames, and training of the video embedder that stands in for a
pretrained action classifier.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from scipy import linalg
from scipy.ndimage import gaussian_filter
from scipy.special import rel_entr

from ..exceptions import EvaluationError, ShapeError
from ..models.embedder import VideoEmbedder
from ..models.schemas import DataConfig, EvalProtocol
from .data import make_source

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, torch.Tensor]

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # 11-tap window at sigma 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_numpy(x: ArrayLike) -> np.ndarray:
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


# ---------------------------------------------------------------- IS / FID


def inception_score(probs: ArrayLike, splits: int = 1) -> Tuple[float, float]:
    """
    Inception Score of class posteriors.

    Args:
        probs: (N, K) rows of class probabilities
        splits: Number of equal parts scored separately

    Returns:
        (mean, std) of exp(mean_i KL(p(y|x_i) || p(y))) over the parts
    """
    p = _as_numpy(probs)
    if p.ndim != 2:
        raise ShapeError(f"expected (N, K) posteriors, got shape {p.shape}")
    if splits < 1 or splits > p.shape[0]:
        raise ValueError(f"splits must lie in 1..{p.shape[0]}, got {splits}")
    if (p < 0).any() or not np.allclose(p.sum(axis=1), 1.0, rtol=0.0, atol=1e-5):
        raise EvaluationError("posterior rows must be non-negative and sum to 1")

    scores = []
    for part in np.array_split(p, splits):
        marginal = part.mean(axis=0, keepdims=True)
        kl = rel_entr(part, marginal).sum(axis=1).mean()
        scores.append(math.exp(kl))
    return float(np.mean(scores)), float(np.std(scores))


@dataclass
class EmbedderStats:
    """Gaussian fit of embedder features."""
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def embedder_stats(features: ArrayLike) -> EmbedderStats:
    """Mean and covariance of (N, D) features."""
    f = _as_numpy(features)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ShapeError(f"expected (N >= 2, D) features, got shape {f.shape}")
    sigma = np.atleast_2d(np.cov(f, rowvar=False))
    return EmbedderStats(mu=f.mean(axis=0), sigma=(sigma + sigma.T) / 2.0)


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    """Symmetric square root; negative eigenvalues are clamped to 0."""
    w, v = linalg.eigh(matrix)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(a: EmbedderStats, b: EmbedderStats) -> float:
    """
    Frechet distance between two Gaussian fits.

    tr((S_a S_b)^(1/2)) is computed as tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)),
    which only needs symmetric eigendecompositions.
    """
    if a.mu.shape != b.mu.shape or a.sigma.shape != b.sigma.shape:
        raise ShapeError(f"feature dimensions differ: {a.mu.shape} vs {b.mu.shape}")
    diff = a.mu - b.mu
    root_a = _psd_sqrt(a.sigma)
    inner = root_a @ b.sigma @ root_a
    eig = linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_covmean = np.sqrt(np.clip(eig, 0.0, None)).sum()
    value = diff.dot(diff) + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * tr_covmean
    return max(float(value), 0.0)


# ---------------------------------------------------------------- PSNR / SSIM


def _unit(x: ArrayLike) -> np.ndarray:
    """[-1, 1] -> [0, 1]."""
    return (_as_numpy(x) + 1.0) / 2.0


def psnr(x: ArrayLike, y: ArrayLike) -> float:
    """PSNR in dB of two frames in [-1, 1], peak 1 on the [0, 1] scale; inf when identical."""
    a, b = _unit(x), _unit(y)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(1.0 / mse))


def _ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    def blur(img):
        return gaussian_filter(img, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")

    ux, uy = blur(a), blur(b)
    uxx, uyy, uxy = blur(a * a), blur(b * b), blur(a * b)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / ((ux ** 2 + uy ** 2 + c1) * (vx + vy + c2))
    pad = int(SSIM_TRUNCATE * SSIM_SIGMA + 0.5)
    return float(s[pad:-pad, pad:-pad].mean(dtype=np.float64))


def ssim(x: ArrayLike, y: ArrayLike) -> float:
    """
    Mean SSIM of two frames in [-1, 1] (data range 1 after mapping to [0, 1]).

    Frames are (H, W) or (C, H, W); multi-channel frames average the
    per-channel values. Gaussian window with sigma 1.5 (11 taps).
    """
    a, b = _unit(x), _unit(y)
    if a.shape != b.shape:
        raise ShapeError(f"frame shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ShapeError(f"expected (H, W) or (C, H, W) frames, got shape {a.shape}")
    window = 2 * int(SSIM_TRUNCATE * SSIM_SIGMA + 0.5) + 1
    if min(a.shape[1:]) < window:
        raise ShapeError(f"frames must be at least {window}x{window} for SSIM")
    return float(np.mean([_ssim_plane(a[c], b[c]) for c in range(a.shape[0])]))


# ---------------------------------------------------------------- embedder


def _label_count(data: DataConfig, source) -> int:
    if data.kind == "toy":
        return data.toy.label_count
    labels = [r.label for r in source.records]
    if any(label is None for label in labels):
        raise EvaluationError("embedder training needs a labelled manifest")
    return max(labels) + 1


def train_embedder(data: DataConfig, protocol: EvalProtocol, seed: int = 0,
                   device: Union[str, torch.device] = "cpu", batch_size: int = 32,
                   lr: float = 1e-3, source=None) -> VideoEmbedder:
    """
    Train the classifier embedder on labelled real clips.

    Args:
        data: Data section (toy clips carry their direction label)
        protocol: Supplies the embedder resolution and iteration count
        seed: Seed for initialization and batch sampling

    Returns:
        Trained embedder in inference mode
    """
    source = source or make_source(data)
    label_count = _label_count(data, source)
    if label_count < 2:
        raise EvaluationError("embedder training needs at least two classes")
    channels, frames, _, _ = data.output_shape()
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)

    embedder = VideoEmbedder(channels, frames, label_count, protocol.embedder_resolution).to(device)
    sample, _ = source.sample_batch(max(4 * batch_size, 64), rng)
    embedder.set_mean(sample.to(device))

    optimizer = torch.optim.Adam(embedder.parameters(), lr=lr)
    embedder.train()
    for it in range(1, protocol.embedder_iterations + 1):
        clips, labels = source.sample_batch(batch_size, rng)
        if labels is None:
            raise EvaluationError("embedder training needs labelled clips")
        loss = F.cross_entropy(embedder(clips.to(device)), labels.to(device))
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        if it % 50 == 0:
            logger.info(f"embedder iter {it}: loss={loss.item():.4f}")
    embedder.eval()
    clips, labels = source.sample_batch(max(4 * batch_size, 64), rng)
    accuracy = embedder_accuracy(embedder, clips.to(device), labels)
    logger.info(f"Embedder accuracy on {clips.shape[0]} fresh clips: {accuracy:.3f}")
    return embedder


def embedder_accuracy(embedder: VideoEmbedder, clips: torch.Tensor, labels: torch.Tensor) -> float:
    """Fraction of clips whose most likely class is their label."""
    with torch.no_grad():
        probs, _ = embedder.embed(clips)
    return float((probs.argmax(dim=1).cpu() == labels.cpu()).float().mean())


def embed_clips(embedder: VideoEmbedder, clips: torch.Tensor,
                batch_size: int = 64) -> Tuple[np.ndarray, np.ndarray]:
    """Posteriors and features of a clip set, computed in batches."""
    device = next(embedder.parameters()).device
    probs, feats = [], []
    for start in range(0, clips.shape[0], batch_size):
        p, f = embedder.embed(clips[start:start + batch_size].to(device))
        probs.append(p.double().cpu().numpy())
        feats.append(f.double().cpu().numpy())
    return np.concatenate(probs), np.concatenate(feats)


def real_stats(embedder: VideoEmbedder, source, n: int, rng: np.random.Generator,
               batch_size: int = 64) -> EmbedderStats:
    """Embedder statistics of n real clips drawn from a source."""
    feats = []
    remaining = n
    while remaining > 0:
        clips, _ = source.sample_batch(min(batch_size, remaining), rng)
        feats.append(embed_clips(embedder, clips, batch_size)[1])
        remaining -= clips.shape[0]
    return embedder_stats(np.concatenate(feats))
