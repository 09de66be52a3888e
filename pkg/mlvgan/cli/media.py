"""
Video writers: per-frame PNG rasters, animated GIFs and frame grids.
"""

import logging
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import torch
from PIL import Image

from ..exceptions import ShapeError

logger = logging.getLogger(__name__)

GIF_FRAME_MS = 100


def to_uint8(video: torch.Tensor) -> np.ndarray:
    """(C, T, H, W) in [-1, 1] -> (T, H, W, C) uint8."""
    if video.dim() != 4:
        raise ShapeError(f"expected a (C, T, H, W) video, got shape {tuple(video.shape)}")
    x = ((video.detach().cpu().float().clamp(-1.0, 1.0) + 1.0) * 127.5).round()
    return x.to(torch.uint8).permute(1, 2, 3, 0).numpy()


def _image(frame: np.ndarray) -> Image.Image:
    if frame.shape[2] == 1:
        return Image.fromarray(np.ascontiguousarray(frame[:, :, 0]))
    return Image.fromarray(np.ascontiguousarray(frame))


def write_frames(video: torch.Tensor, out_dir: Union[str, Path]) -> List[Path]:
    """Write frame_000.png, frame_001.png, ... for one video."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t, frame in enumerate(to_uint8(video)):
        path = out_dir / f"frame_{t:03d}.png"
        _image(frame).save(path, format="PNG")
        paths.append(path)
    return paths


def write_gif(video: torch.Tensor, path: Union[str, Path]) -> Path:
    """Animated, looping GIF of one video."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    images = [_image(frame) for frame in to_uint8(video)]
    images[0].save(
        path,
        format="GIF",
        save_all=True,
        append_images=images[1:],
        duration=GIF_FRAME_MS,
        loop=0,
    )
    return path


def frame_grid(videos: Sequence[torch.Tensor], stride: int = 1, padding: int = 1) -> Image.Image:
    """
    One row per video, one column per kept frame (every ``stride``-th,
    starting at frame 0).
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if not videos:
        raise ShapeError("no videos to lay out")
    rows = [to_uint8(v)[::stride] for v in videos]
    t, h, w, c = rows[0].shape
    grid = np.zeros(
        (len(rows) * (h + padding) - padding, t * (w + padding) - padding, c), dtype=np.uint8
    )
    for r, frames in enumerate(rows):
        if frames.shape != rows[0].shape:
            raise ShapeError("all videos of a grid must share one shape")
        for col, frame in enumerate(frames):
            y, x = r * (h + padding), col * (w + padding)
            grid[y:y + h, x:x + w] = frame
    return _image(grid)


def write_grid(videos: Sequence[torch.Tensor], path: Union[str, Path], stride: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame_grid(videos, stride).save(path, format="PNG")
    logger.info(f"Wrote grid {path}")
    return path
