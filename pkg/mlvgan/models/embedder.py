"""
Small 3D convolutional video classifier used as the feature embedder for
Inception Score and Frechet distance on desk-scale data.

Input contract: clips (N, C, T, H, W) in [-1, 1] are area-resized to
``resolution`` x ``resolution`` and standardized by subtracting a
dataset-wide mean tensor of shape (C, T, resolution, resolution).
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import CheckpointError, ShapeError
from .layers import SHORTCUT_GAIN, DownBlock, init_layer

logger = logging.getLogger(__name__)

EMBEDDER_FORMAT_VERSION = 1


class VideoEmbedder(nn.Module):
    """3D ResNet classifier; the penultimate activations are the embedding."""

    def __init__(self, in_channels: int, frames: int, label_count: int, resolution: int = 32,
                 channels: Tuple[int, ...] = (16, 32, 64), feature_dim: int = 64):
        super().__init__()
        self.meta = {
            "in_channels": in_channels,
            "frames": frames,
            "label_count": label_count,
            "resolution": resolution,
            "channels": list(channels),
            "feature_dim": feature_dim,
        }
        blocks = []
        prev = in_channels
        for i, width in enumerate(channels):
            blocks.append(DownBlock(prev, width, dims=3, first=(i == 0)))
            prev = width
        self.blocks = nn.ModuleList(blocks)
        self.hidden = init_layer(nn.Linear(prev, feature_dim), SHORTCUT_GAIN)
        self.head = init_layer(nn.Linear(feature_dim, label_count), SHORTCUT_GAIN)
        self.register_buffer("mean", torch.zeros(in_channels, frames, resolution, resolution))

    def preprocess(self, clips: torch.Tensor) -> torch.Tensor:
        c, t = self.meta["in_channels"], self.meta["frames"]
        if clips.dim() != 5 or clips.shape[1] != c or clips.shape[2] != t:
            raise ShapeError(
                f"embedder expects (N, {c}, {t}, H, W) clips, got {tuple(clips.shape)}"
            )
        r = self.meta["resolution"]
        x = F.adaptive_avg_pool3d(clips, (t, r, r))
        return x - self.mean

    def set_mean(self, clips: torch.Tensor) -> None:
        """Record the dataset-wide mean tensor from a sample of real clips."""
        r = self.meta["resolution"]
        with torch.no_grad():
            resized = F.adaptive_avg_pool3d(clips, (clips.shape[2], r, r))
            self.mean.copy_(resized.mean(dim=0))

    def features(self, clips: torch.Tensor) -> torch.Tensor:
        h = self.preprocess(clips)
        for block in self.blocks:
            h = block(h)
        h = F.relu(h).mean(dim=(2, 3, 4))
        return F.relu(self.hidden(h))

    def forward(self, clips: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(clips))

    @torch.no_grad()
    def embed(self, clips: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Class posteriors (N, K) and features (N, feature_dim)."""
        feats = self.features(clips)
        return torch.softmax(self.head(feats), dim=1), feats

    def save(self, path: Union[str, Path]) -> None:
        torch.save(
            {"format_version": EMBEDDER_FORMAT_VERSION, "meta": self.meta, "state": self.state_dict()},
            str(path),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "VideoEmbedder":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"Embedder not found: {path}")
        try:
            payload = torch.load(str(path), map_location="cpu", weights_only=False)
        except Exception as e:
            raise CheckpointError(f"Corrupt embedder file {path}: {e}") from e
        if not isinstance(payload, dict) or payload.get("format_version") != EMBEDDER_FORMAT_VERSION:
            raise CheckpointError(f"Unsupported embedder format in {path}")
        meta = payload["meta"]
        model = cls(
            meta["in_channels"],
            meta["frames"],
            meta["label_count"],
            meta["resolution"],
            tuple(meta["channels"]),
            meta["feature_dim"],
        )
        model.load_state_dict(payload["state"])
        model.eval()
        return model
