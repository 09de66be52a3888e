"""
Multi-level video generator.

A CLSTM temporal generator turns the noise vector into one coarse feature
map per frame; abstract blocks raise the resolution level by level and
unshared rendering blocks turn each level's abstract map into frames. At
training time a subsampling layer between consecutive abstract blocks
drops frames, so deeper (larger) levels only ever see a few frames.
"""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from ..exceptions import LabelError, ShapeError
from ..services.subsampling import make_spec, subsample_frames
from .layers import (
    SHORTCUT_GAIN,
    ConvLSTMCell,
    RenderBlock,
    UpBlock,
    batch_to_frames,
    frames_to_batch,
    init_layer,
)
from .schemas import ModelConfig

logger = logging.getLogger(__name__)

LabelLike = Optional[Union[int, torch.Tensor]]


def sample_noise(n: int, latent_dim: int, generator: Optional[torch.Generator] = None,
                 device: Union[str, torch.device] = "cpu") -> torch.Tensor:
    """Draw n noise vectors uniformly from [-1, 1]^latent_dim."""
    z = torch.rand(n, latent_dim, generator=generator, device=device)
    return z * 2.0 - 1.0


def level_shapes(config: ModelConfig) -> List[Tuple[int, int, int]]:
    """(T_l, H_l, W_l) of every rendered level on the training path, coarsest first."""
    counts = config.frame_counts()
    rendered = range(1, config.levels + 1) if config.render_all_levels else [config.levels]
    return [(counts[level - 1],) + config.level_resolution(level) for level in rendered]


def lerp_noise(z1: torch.Tensor, z2: torch.Tensor, alpha: float) -> torch.Tensor:
    """(1 - alpha) * z1 + alpha * z2; alpha = 0.5 gives exactly (z1 + z2) / 2."""
    return z1 * (1.0 - alpha) + z2 * alpha


class MultiLevelGenerator(nn.Module):
    """Temporal generator + L abstract blocks + L rendering blocks."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c0 = config.clstm_channels
        self.fc = init_layer(
            nn.Linear(config.latent_dim + config.label_count, c0 * config.base_height * config.base_width),
            SHORTCUT_GAIN,
        )
        self.clstm = ConvLSTMCell(c0, c0, kernel_size=3)
        self.z_proj = init_layer(nn.Linear(config.latent_dim, config.z_channels), SHORTCUT_GAIN)

        self.abstract = nn.ModuleList()
        in_channels = c0 + config.z_channels
        block = 0
        for count in config.upsample_blocks:
            stage = nn.ModuleList()
            for _ in range(count):
                stage.append(UpBlock(in_channels, config.channels[block], config.label_count))
                in_channels = config.channels[block]
                block += 1
            self.abstract.append(stage)

        self.render = nn.ModuleDict()
        for level in self.rendered_levels:
            self.render[str(level)] = RenderBlock(
                config.level_channels(level), config.out_channels, config.label_count
            )

    @property
    def rendered_levels(self) -> List[int]:
        levels = self.config.levels
        return list(range(1, levels + 1)) if self.config.render_all_levels else [levels]

    # ------------------------------------------------------------------ labels

    def _labels(self, label: LabelLike, n: int, device: torch.device) -> Optional[torch.Tensor]:
        """Validate a label argument and expand it to one entry per sample."""
        k = self.config.label_count
        if k == 0:
            if label is not None:
                raise LabelError("label given to an unconditional model")
            return None
        if label is None:
            raise LabelError(f"conditional model with {k} labels needs a label")
        labels = torch.as_tensor(label, dtype=torch.long, device=device)
        if labels.dim() == 0:
            labels = labels.expand(n)
        if labels.shape != (n,):
            raise LabelError(f"expected {n} labels, got shape {tuple(labels.shape)}")
        if bool((labels < 0).any()) or bool((labels >= k).any()):
            raise LabelError(f"labels must lie in 0..{k - 1}")
        return labels

    @staticmethod
    def _frame_labels(labels: Optional[torch.Tensor], frames: int) -> Optional[torch.Tensor]:
        return None if labels is None else labels.repeat_interleave(frames)

    def _check_noise(self, z: torch.Tensor) -> None:
        if z.dim() != 2 or z.shape[1] != self.config.latent_dim:
            raise ShapeError(
                f"expected noise of shape (N, {self.config.latent_dim}), got {tuple(z.shape)}"
            )

    # ------------------------------------------------------------------ blocks

    def temporal_generate(self, z: torch.Tensor, frames: Optional[int] = None,
                          label: LabelLike = None) -> torch.Tensor:
        """
        Run the CLSTM recurrence.

        Step 0 consumes the fully-connected map of [onehot(label), z]; later
        steps consume the map of the zero vector.

        Returns:
            Coarse feature maps (N, C0, T, h0, w0)
        """
        self._check_noise(z)
        if frames is None:
            frames = self.config.frames
        if frames < 1:
            raise ValueError(f"frames must be >= 1, got {frames}")
        n = z.shape[0]
        labels = self._labels(label, n, z.device)
        cfg = self.config
        fc_in = z
        if labels is not None:
            onehot = torch.nn.functional.one_hot(labels, cfg.label_count).to(z.dtype)
            fc_in = torch.cat([onehot, z], dim=1)
        shape = (n, cfg.clstm_channels, cfg.base_height, cfg.base_width)
        first = self.fc(fc_in).view(shape)
        rest = self.fc(torch.zeros_like(fc_in)).view(shape)

        state = self.clstm.initial_state(first)
        maps = []
        for t in range(frames):
            out, state = self.clstm(first if t == 0 else rest, state)
            maps.append(out)
        return torch.stack(maps, dim=2)

    def first_abstract_input(self, maps: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Concatenate the projected noise, broadcast over (t, h, w), to the CLSTM maps."""
        n, _, t, h, w = maps.shape
        zc = self.z_proj(z)[:, :, None, None, None].expand(n, -1, t, h, w)
        return torch.cat([maps, zc], dim=1)

    def abstract_forward(self, level: int, h: torch.Tensor, label: LabelLike = None) -> torch.Tensor:
        """
        Apply abstract block ``level`` (1-based) to an abstract map.

        Each upsampling block doubles H and W; T is preserved.
        """
        stage = self._stage(level)
        if h.dim() != 5:
            raise ShapeError(f"expected a rank-5 abstract map, got shape {tuple(h.shape)}")
        expected = self._abstract_in_channels(level)
        if h.shape[1] != expected:
            raise ShapeError(f"level {level} expects {expected} channels, got {h.shape[1]}")
        n, _, t = h.shape[:3]
        labels = self._frame_labels(self._labels(label, n, h.device), t)
        x = frames_to_batch(h)
        for block in stage:
            x = block(x, labels)
        return batch_to_frames(x, n)

    def render_level(self, level: int, h: torch.Tensor, label: LabelLike = None) -> torch.Tensor:
        """Render an abstract map of level ``level`` into frames in [-1, 1]."""
        key = str(level)
        if key not in self.render:
            raise ShapeError(f"level {level} has no rendering block")
        if h.dim() != 5 or h.shape[1] != self.config.level_channels(level):
            raise ShapeError(
                f"level {level} renders {self.config.level_channels(level)}-channel maps, "
                f"got shape {tuple(h.shape)}"
            )
        n, _, t = h.shape[:3]
        labels = self._frame_labels(self._labels(label, n, h.device), t)
        return batch_to_frames(self.render[key](frames_to_batch(h), labels), n)

    def _stage(self, level: int) -> nn.ModuleList:
        if not 1 <= level <= self.config.levels:
            raise ShapeError(f"level must lie in 1..{self.config.levels}, got {level}")
        return self.abstract[level - 1]

    def _abstract_in_channels(self, level: int) -> int:
        if level == 1:
            return self.config.clstm_channels + self.config.z_channels
        return self.config.level_channels(level - 1)

    # ------------------------------------------------------------------ passes

    def _levels(self, z: torch.Tensor, label: LabelLike, rates: List[int],
                rng: Optional[np.random.Generator]) -> List[torch.Tensor]:
        h = self.first_abstract_input(self.temporal_generate(z, label=label), z)
        outputs = []
        for level in range(1, self.config.levels + 1):
            if level > 1:
                rate = rates[level - 2]
                h = subsample_frames(h, make_spec(h.shape[2], rate, rng))
            h = self.abstract_forward(level, h, label)
            if str(level) in self.render:
                outputs.append(self.render_level(level, h, label))
        return outputs

    def infer(self, z: torch.Tensor, label: LabelLike = None) -> torch.Tensor:
        """Dense path: every abstract block, no subsampling, final rendering block only."""
        self._check_noise(z)
        h = self.first_abstract_input(self.temporal_generate(z, label=label), z)
        for level in range(1, self.config.levels + 1):
            h = self.abstract_forward(level, h, label)
        return self.render_level(self.config.levels, h, label)

    def train_forward(self, z: torch.Tensor, rng: np.random.Generator,
                      label: LabelLike = None) -> List[torch.Tensor]:
        """
        Sparse training path: one shared pass emitting a video per rendered level.

        Junction offsets are drawn from ``rng`` in level order. A model that
        renders only its last level returns that one video, subsampled by the
        first junction when it is enabled.
        """
        self._check_noise(z)
        return self._levels(z, label, self.config.junction_rates(), rng)

    def dense_levels(self, z: torch.Tensor, label: LabelLike = None) -> List[torch.Tensor]:
        """Every rendering block's output with all subsampling layers disabled."""
        self._check_noise(z)
        return self._levels(z, label, [1] * (self.config.levels - 1), None)

    def interpolate(self, z1: torch.Tensor, z2: torch.Tensor, steps: int,
                    label: LabelLike = None) -> List[torch.Tensor]:
        """Videos for noise vectors evenly spaced on the segment z1 -> z2, endpoints included."""
        if steps < 2:
            raise ValueError(f"steps must be >= 2, got {steps}")
        if z1.shape != z2.shape:
            raise ShapeError(f"noise shapes differ: {tuple(z1.shape)} vs {tuple(z2.shape)}")
        videos = []
        for i in range(steps):
            alpha = i / (steps - 1)
            videos.append(self.infer(lerp_noise(z1, z2, alpha), label))
        return videos
