"""
Snapshot evaluation and multi-level consistency probes.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..exceptions import EvaluationError, ShapeError
from ..models.embedder import VideoEmbedder
from ..models.generator import MultiLevelGenerator, sample_noise
from ..models.schemas import EvalProtocol, RunConfig
from .checkpoint import FINAL_NAME, list_snapshots, load_checkpoint, load_generator
from .data import make_source
from .metrics import embed_clips, embedder_stats, fid, inception_score, psnr, real_stats, ssim

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["iteration", "IS_mean", "IS_std", "FID_mean", "FID_std"]
CONSISTENCY_COLUMNS = ["frame", "psnr_mean", "psnr_ci", "ssim_mean", "ssim_ci"]
CI_Z = 1.96


@torch.no_grad()
def sample_videos(generator: MultiLevelGenerator, n: int, noise_gen: torch.Generator,
                  batch_size: int = 64, label: Optional[int] = None) -> torch.Tensor:
    """
    n videos from the dense path, generated in batches.

    Conditional models draw a uniform label per video unless ``label`` is given.
    """
    cfg = generator.config
    device = next(generator.parameters()).device
    generator.eval()
    videos = []
    for start in range(0, n, batch_size):
        m = min(batch_size, n - start)
        z = sample_noise(m, cfg.latent_dim, generator=noise_gen).to(device)
        labels = None
        if cfg.conditional:
            if label is None:
                labels = torch.randint(0, cfg.label_count, (m,), generator=noise_gen).to(device)
            else:
                labels = label
        videos.append(generator.infer(z, labels).cpu())
    return torch.cat(videos)


# ---------------------------------------------------------------- IS / FID


@dataclass
class ScoreRow:
    iteration: int
    is_mean: float
    is_std: float
    fid_mean: float
    fid_std: float
    path: Optional[Path] = None

    def csv_row(self) -> List[str]:
        return [str(self.iteration)] + [
            f"{v:.6f}" for v in (self.is_mean, self.is_std, self.fid_mean, self.fid_std)
        ]


@dataclass
class EvaluationResult:
    best: ScoreRow
    rows: List[ScoreRow] = field(default_factory=list)


def score_generator(generator: MultiLevelGenerator, embedder: VideoEmbedder, reference,
                    protocol: EvalProtocol, seed: int = 0) -> Tuple[float, float, float, float]:
    """
    IS and FID of a generator, each as (mean, std) over ``protocol.repeats``
    sets of ``protocol.samples`` videos.

    Args:
        reference: EmbedderStats of real clips
        seed: Noise seed; equal seeds give every snapshot the same noise vectors
    """
    noise_gen = torch.Generator().manual_seed(seed)
    probs, fids = [], []
    for _ in range(protocol.repeats):
        videos = sample_videos(generator, protocol.samples, noise_gen, protocol.batch_size)
        p, feats = embed_clips(embedder, videos, protocol.batch_size)
        probs.append(p)
        fids.append(fid(embedder_stats(feats), reference))
    is_mean, is_std = inception_score(np.concatenate(probs), splits=protocol.repeats)
    return is_mean, is_std, float(np.mean(fids)), float(np.std(fids))


def _snapshot_paths(run_dir: Path, stride: int) -> List[Tuple[int, Path]]:
    """Periodic snapshots on the stride plus final.pt when it adds a new iteration."""
    found = [(it, p) for it, p in list_snapshots(run_dir) if it % stride == 0]
    final = run_dir / FINAL_NAME
    if final.exists():
        _, state = load_checkpoint(final)
        iteration = int(state.get("iteration", 0))
        if all(it != iteration for it, _ in found):
            found.append((iteration, final))
    return sorted(found, key=lambda item: item[0])


def evaluate_snapshots(run_dir: Union[str, Path], protocol: EvalProtocol,
                       embedder: Optional[VideoEmbedder], config: Optional[RunConfig] = None,
                       seed: int = 0, source=None) -> EvaluationResult:
    """
    Score every snapshot of a run and select the one with the largest IS.

    Ties go to the earliest iteration.

    Raises:
        EvaluationError: no embedder, or no snapshots in ``run_dir``
    """
    run_dir = Path(run_dir)
    if embedder is None:
        raise EvaluationError("evaluation needs a trained embedder")
    snapshots = _snapshot_paths(run_dir, protocol.snapshot_stride)
    if not snapshots:
        raise EvaluationError(f"No snapshots in {run_dir}")

    device = next(embedder.parameters()).device
    rows: List[ScoreRow] = []
    reference = None
    for iteration, path in snapshots:
        generator, stored = load_generator(path, device)
        if reference is None:
            run_config = config or stored
            reference = real_stats(
                embedder,
                source or make_source(run_config.data),
                protocol.samples,
                np.random.default_rng(seed),
                protocol.batch_size,
            )
        scores = score_generator(generator, embedder, reference, protocol, seed)
        rows.append(ScoreRow(iteration, *scores, path=path))
        logger.info(
            f"snapshot {iteration}: IS={scores[0]:.3f}±{scores[1]:.3f} "
            f"FID={scores[2]:.3f}±{scores[3]:.3f}"
        )

    best = rows[0]
    for row in rows[1:]:
        if row.is_mean > best.is_mean:
            best = row
    logger.info(f"Best snapshot: iteration {best.iteration} ({best.path})")
    return EvaluationResult(best=best, rows=rows)


def write_score_table(rows: List[ScoreRow], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SCORE_COLUMNS)
        writer.writerows(row.csv_row() for row in rows)
    return path


# ---------------------------------------------------------------- consistency


@dataclass
class ConsistencyCurves:
    """Per-frame mean and 95% half-width of PSNR and SSIM between level 1 and level L."""
    psnr_mean: List[float]
    psnr_ci: List[float]
    ssim_mean: List[float]
    ssim_ci: List[float]


def _mean_ci(values: np.ndarray) -> Tuple[float, float]:
    mean = float(np.mean(values))
    if values.shape[0] < 2 or np.all(values == values[0]):
        return mean, 0.0
    if not np.isfinite(values).all():
        return mean, math.nan
    return mean, float(CI_Z * np.std(values, ddof=1) / math.sqrt(values.shape[0]))


@torch.no_grad()
def level_consistency(generator: MultiLevelGenerator, n_samples: int, seed: int = 0,
                      batch_size: int = 16, label: Optional[int] = None) -> ConsistencyCurves:
    """
    Compare level-1 frames, nearest-upscaled to the final resolution, with
    level-L frames of the same dense pass (every subsampling layer disabled).
    """
    cfg = generator.config
    if not cfg.render_all_levels:
        raise ShapeError("consistency probes need every rendering block")
    device = next(generator.parameters()).device
    generator.eval()
    noise_gen = torch.Generator().manual_seed(seed)
    scale = 2 ** (cfg.levels - 1)

    psnrs, ssims = [], []
    for start in range(0, n_samples, batch_size):
        m = min(batch_size, n_samples - start)
        z = sample_noise(m, cfg.latent_dim, generator=noise_gen).to(device)
        labels = None
        if cfg.conditional:
            labels = label if label is not None else torch.randint(
                0, cfg.label_count, (m,), generator=noise_gen
            ).to(device)
        levels = generator.dense_levels(z, labels)
        first, last = levels[0], levels[-1]
        if scale > 1:
            first = F.interpolate(first, scale_factor=(1, scale, scale), mode="nearest")
        first, last = first.cpu(), last.cpu()
        for i in range(m):
            psnrs.append([psnr(first[i, :, t], last[i, :, t]) for t in range(cfg.frames)])
            ssims.append([ssim(first[i, :, t], last[i, :, t]) for t in range(cfg.frames)])

    psnr_arr, ssim_arr = np.asarray(psnrs), np.asarray(ssims)
    curves = ConsistencyCurves([], [], [], [])
    for t in range(cfg.frames):
        mean, ci = _mean_ci(psnr_arr[:, t])
        curves.psnr_mean.append(mean)
        curves.psnr_ci.append(ci)
        mean, ci = _mean_ci(ssim_arr[:, t])
        curves.ssim_mean.append(mean)
        curves.ssim_ci.append(ci)
    return curves


def write_consistency_csv(curves: ConsistencyCurves, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CONSISTENCY_COLUMNS)
        for t in range(len(curves.psnr_mean)):
            writer.writerow([
                t,
                curves.psnr_mean[t],
                curves.psnr_ci[t],
                curves.ssim_mean[t],
                curves.ssim_ci[t],
            ])
    return path
