"""
Video ingestion.

Real clips are read from directories of per-clip frame images (decoding of
video containers happens upstream). A synthetic moving-shapes dataset
provides labelled desk-scale data with known motion.
"""

import csv
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
from cachetools import LRUCache
from PIL import Image

from ..config import get_settings
from ..exceptions import ClipError, ConfigError
from ..models.schemas import ClipRequest, DataConfig, ToyDatasetConfig

logger = logging.getLogger(__name__)

FRAME_SUFFIXES = {".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff"}
MANIFEST_NAME = "manifest.csv"


@dataclass
class ClipRecord:
    """One manifest entry."""
    path: Path
    frames: int
    label: Optional[int] = None


def list_frames(clip_dir: Path) -> List[Path]:
    """Frame images of a clip directory in name order."""
    if not clip_dir.is_dir():
        raise ClipError(f"Clip directory does not exist: {clip_dir}")
    return sorted(p for p in clip_dir.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def _decode_frame(path: Path, req: ClipRequest) -> np.ndarray:
    """Decode, crop and resize one frame to (H, W, C) uint8."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB" if req.channels == 3 else "L")
            if req.crop == "center":
                w, h = img.size
                side = min(w, h)
                left, top = (w - side) // 2, (h - side) // 2
                img = img.crop((left, top, left + side, top + side))
            if img.size != (req.width, req.height):
                img = img.resize((req.width, req.height), Image.Resampling.BILINEAR)
            array = np.asarray(img, dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise ClipError(f"Could not decode frame {path}: {e}") from e
    if array.ndim == 2:
        array = array[:, :, None]
    return array


def decode_clip(clip_dir: Union[str, Path], req: ClipRequest) -> np.ndarray:
    """Decode every frame of a clip directory to (T_all, H, W, C) uint8."""
    frames = list_frames(Path(clip_dir))
    if not frames:
        raise ClipError(f"No frame images in {clip_dir}")
    return np.stack([_decode_frame(p, req) for p in frames])


def to_unit_range(frames: np.ndarray) -> np.ndarray:
    """uint8 (T, H, W, C) -> float32 (C, T, H, W) in [-1, 1]."""
    x = frames.astype(np.float32) / 127.5 - 1.0
    return np.ascontiguousarray(x.transpose(3, 0, 1, 2))


def load_clip(source: Union[str, Path, np.ndarray], req: ClipRequest,
              rng: np.random.Generator) -> torch.Tensor:
    """
    Cut one training clip out of a video.

    Args:
        source: Clip directory, or already decoded (T_all, H, W, C) uint8 frames
        req: Clip request (frames, crop, resolution, flip probability)
        rng: Seeded random source; draws the window start, then the flip

    Returns:
        Tensor (C, T, H, W) with values in [-1, 1]

    Raises:
        ClipError: the video is shorter than ``req.frames`` or cannot be decoded
    """
    decoded = source if isinstance(source, np.ndarray) else decode_clip(source, req)
    total = decoded.shape[0]
    if total < req.frames:
        raise ClipError(f"Clip has {total} frames, {req.frames} requested")
    start = int(rng.integers(0, total - req.frames + 1))
    flip = bool(rng.random() < req.flip_prob)
    window = decoded[start:start + req.frames]
    if flip:
        window = window[:, :, ::-1]
    return torch.from_numpy(to_unit_range(window))


def read_manifest(root: Path) -> List[ClipRecord]:
    """Read ``manifest.csv`` (path, frames, label) or scan sub-directories."""
    manifest = root / MANIFEST_NAME
    records = []
    if manifest.exists():
        with open(manifest, newline="") as f:
            for row in csv.DictReader(f):
                label = row.get("label")
                records.append(
                    ClipRecord(
                        path=root / row["path"],
                        frames=int(row["frames"]),
                        label=int(label) if label not in (None, "") else None,
                    )
                )
        return records
    for clip_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        records.append(ClipRecord(path=clip_dir, frames=len(list_frames(clip_dir))))
    return records


class FolderVideoSource:
    """
    Real clips from a directory tree.

    Features:
    - Manifest or directory scan
    - LRU cache of decoded clips
    - Optional thread pool; every clip gets its own child seed, so batches
      are identical for any worker count
    """

    MAX_ATTEMPTS_PER_CLIP = 10

    def __init__(self, root: Union[str, Path], req: ClipRequest, min_frames: Optional[int] = None):
        self.root = Path(root)
        if not self.root.is_dir():
            raise ConfigError(f"Dataset root does not exist: {self.root}")
        self.req = req
        self.records = [
            r for r in read_manifest(self.root) if r.frames >= (min_frames or req.frames)
        ]
        if not self.records:
            raise ConfigError(f"No usable clips under {self.root}")
        settings = get_settings()
        self._cache: LRUCache = LRUCache(maxsize=max(1, settings.frame_cache_size))
        self._lock = threading.Lock()
        self._workers = settings.data_workers
        logger.info(f"Dataset {self.root}: {len(self.records)} clips")

    def _load(self, index: int, seed: int) -> torch.Tensor:
        record = self.records[index]
        key = str(record.path)
        with self._lock:
            decoded = self._cache.get(key)
        if decoded is None:
            decoded = decode_clip(record.path, self.req)
            with self._lock:
                self._cache[key] = decoded
        return load_clip(decoded, self.req, np.random.default_rng(seed))

    def _try_load(self, index: int, seed: int) -> Optional[torch.Tensor]:
        try:
            return self._load(index, seed)
        except ClipError as e:
            logger.warning(f"Skipping clip {self.records[index].path}: {e}")
            return None

    def sample_batch(self, n: int, rng: np.random.Generator) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        """
        Draw n clips uniformly from the dataset.

        Returns:
            Clips (n, C, T, H, W) and labels (n,) when every record is labelled
        """
        indices = [int(i) for i in rng.integers(0, len(self.records), size=n)]
        seeds = [int(s) for s in rng.integers(0, 2 ** 63 - 1, size=n)]
        if self._workers > 0:
            with ThreadPoolExecutor(max_workers=self._workers) as pool:
                clips = list(pool.map(self._try_load, indices, seeds))
        else:
            clips = [self._try_load(i, s) for i, s in zip(indices, seeds)]

        attempts = 0
        for slot, clip in enumerate(clips):
            while clip is None:
                attempts += 1
                if attempts > self.MAX_ATTEMPTS_PER_CLIP * n:
                    raise ClipError(f"Too many unreadable clips under {self.root}")
                indices[slot] = int(rng.integers(0, len(self.records)))
                clip = self._try_load(indices[slot], int(rng.integers(0, 2 ** 63 - 1)))
            clips[slot] = clip

        labels = [self.records[i].label for i in indices]
        label_tensor = None
        if all(label is not None for label in labels):
            label_tensor = torch.tensor(labels, dtype=torch.long)
        return torch.stack(clips), label_tensor


# ---------------------------------------------------------------- toy dataset


def _coverage(start: float, size: float, length: int) -> np.ndarray:
    """Fraction of each unit pixel cell covered by the interval [start, start + size)."""
    cells = np.arange(length, dtype=np.float64)
    return np.clip(np.minimum(cells + 1.0, start + size) - np.maximum(cells, start), 0.0, 1.0)


def _start_range(extent: float, side: float, travel: float) -> Tuple[float, float]:
    """Start coordinates that keep the whole trajectory in bounds (or the full range)."""
    lo = max(0.0, -travel)
    hi = min(extent - side, extent - side - travel)
    if lo > hi:
        return 0.0, max(0.0, extent - side)
    return lo, hi


def toy_batch(cfg: ToyDatasetConfig, n: int,
              rng: np.random.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Clips of squares moving linearly on a dark background.

    Every shape of a clip moves with the same velocity; the label is the
    direction class: the angle lies in [k, k + 1) * 2pi / label_count.
    Squares are rendered with exact area coverage, so their pixel mass is
    the same in every frame while they stay in bounds.

    Returns:
        Clips (n, C, T, H, W) in [-1, 1] and labels (n,)
    """
    k = cfg.label_count
    h, w, t, c = cfg.height, cfg.width, cfg.frames, cfg.channels
    side = cfg.shape_size * min(h, w)
    clips = np.zeros((n, c, t, h, w), dtype=np.float64)
    labels = np.zeros(n, dtype=np.int64)
    steps = np.arange(t, dtype=np.float64)

    for i in range(n):
        label = int(rng.integers(0, k))
        angle = (label + rng.random()) * 2.0 * math.pi / k
        speed = rng.uniform(cfg.min_speed, cfg.max_speed)
        vx, vy = speed * math.cos(angle), speed * math.sin(angle)
        labels[i] = label
        for _ in range(cfg.shape_count):
            color = np.ones(c) if c == 1 else rng.uniform(0.5, 1.0, size=c)
            x_lo, x_hi = _start_range(w, side, vx * (t - 1))
            y_lo, y_hi = _start_range(h, side, vy * (t - 1))
            sx, sy = rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi)
            for step in steps:
                cov_x = _coverage(sx + vx * step, side, w)
                cov_y = _coverage(sy + vy * step, side, h)
                mask = np.outer(cov_y, cov_x)
                clips[i, :, int(step)] += color[:, None, None] * mask

    clips = np.clip(clips, 0.0, 1.0) * 2.0 - 1.0
    return torch.from_numpy(clips.astype(np.float32)), torch.from_numpy(labels)


class ToyVideoSource:
    """Moving-shapes clips drawn on demand."""

    def __init__(self, cfg: ToyDatasetConfig):
        self.cfg = cfg

    def sample_batch(self, n: int, rng: np.random.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
        return toy_batch(self.cfg, n, rng)


def make_source(config: DataConfig) -> Union[ToyVideoSource, FolderVideoSource]:
    """Build the clip source a data section describes."""
    if config.kind == "toy":
        return ToyVideoSource(config.toy)
    return FolderVideoSource(config.root, config.clip)

