"""
Per-level discriminators.

Every level owns a 3D residual network of the same topology; their logits
are summed and squashed into one probability. The two comparison
baselines (a single 3D discriminator, and a 3D discriminator paired with a
2D one that scores a single frame) are built from the same blocks.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import LabelError, ShapeError
from .generator import level_shapes
from .layers import SHORTCUT_GAIN, DownBlock, init_layer
from .schemas import DiscriminatorConfig, ModelConfig

logger = logging.getLogger(__name__)


class SubDiscriminator(nn.Module):
    """
    Residual discriminator over (N, C, T, H, W) clips (``dims=3``) or
    (N, C, H, W) frames (``dims=2``).

    Residual blocks -> ReLU -> global sum pool -> linear logit, plus a
    projection term <embed(label), features> when conditional.
    """

    def __init__(self, in_channels: int, channels: Sequence[int], dims: int = 3,
                 label_count: int = 0):
        super().__init__()
        self.dims = dims
        self.in_channels = in_channels
        blocks = []
        prev = in_channels
        for i, width in enumerate(channels):
            blocks.append(DownBlock(prev, width, dims=dims, first=(i == 0)))
            prev = width
        self.blocks = nn.ModuleList(blocks)
        self.linear = init_layer(nn.Linear(prev, 1), SHORTCUT_GAIN)
        self.label_count = label_count
        self.embed = None
        if label_count > 0:
            self.embed = nn.Embedding(label_count, prev)
            nn.init.xavier_uniform_(self.embed.weight, gain=SHORTCUT_GAIN)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Pre-logit features (N, C_last)."""
        if x.dim() != self.dims + 2 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"expected a rank-{self.dims + 2} input with {self.in_channels} channels, "
                f"got shape {tuple(x.shape)}"
            )
        h = x
        for block in self.blocks:
            h = block(h)
        h = F.relu(h)
        return h.sum(dim=tuple(range(2, h.dim())))

    def forward(self, x: torch.Tensor, labels: Optional[torch.Tensor] = None) -> torch.Tensor:
        feats = self.features(x)
        logits = self.linear(feats).squeeze(1)
        if self.embed is not None:
            logits = logits + (self.embed(labels) * feats).sum(dim=1)
        return logits


def aggregate_logits(scores: Sequence[torch.Tensor]) -> torch.Tensor:
    """Sum of per-level logits; the aggregate discriminator is sigmoid of this."""
    if not scores:
        raise ShapeError("no level scores to aggregate")
    n = scores[0].shape
    for s in scores:
        if s.shape != n:
            raise ShapeError(f"level scores differ in shape: {tuple(s.shape)} vs {tuple(n)}")
    return torch.stack(list(scores), dim=0).sum(dim=0)


def aggregate(scores: Sequence[torch.Tensor]) -> torch.Tensor:
    """Aggregate probability: sigmoid of the summed logits."""
    return torch.sigmoid(aggregate_logits(scores))


def select_frame(x: torch.Tensor, index: int) -> torch.Tensor:
    """Frame ``index`` of an (N, C, T, H, W) clip as an (N, C, H, W) batch."""
    if not 0 <= index < x.shape[2]:
        raise ShapeError(f"frame {index} outside 0..{x.shape[2] - 1}")
    return x[:, :, index]


def input_shapes(model: ModelConfig, kind: str) -> List[Tuple[int, ...]]:
    """
    Per-input shape without batch and channel axes: (T, H, W) for 3D
    sub-discriminators, (H, W) for the 2D frame discriminator.
    """
    shapes: List[Tuple[int, ...]] = list(level_shapes(model))
    if kind == "3d+2d":
        shapes.append(shapes[-1][1:])
    return shapes


class MultiLevelDiscriminator(nn.Module):
    """
    Holds one sub-discriminator per discriminator input.

    With ``shapes`` given, every input must match its entry exactly.
    """

    def __init__(self, config: DiscriminatorConfig, in_channels: int,
                 shapes: Optional[Sequence[Tuple[int, ...]]] = None):
        super().__init__()
        self.config = config
        label_count = config.label_count or 0
        self.label_count = label_count
        subs = [
            SubDiscriminator(in_channels, config.channels, dims=3, label_count=label_count)
            for _ in range(1 if config.kind != "multilevel" else config.levels)
        ]
        if config.kind == "3d+2d":
            subs.append(
                SubDiscriminator(
                    in_channels,
                    config.frame_channels or config.channels,
                    dims=2,
                    label_count=label_count,
                )
            )
        self.subs = nn.ModuleList(subs)
        self.shapes = None if shapes is None else [tuple(s) for s in shapes]
        if self.shapes is not None and len(self.shapes) != len(subs):
            raise ShapeError(f"{len(self.shapes)} input shapes for {len(subs)} sub-discriminators")

    def _labels(self, label, n: int, device: torch.device) -> Optional[torch.Tensor]:
        if self.label_count == 0:
            if label is not None:
                raise LabelError("label given to an unconditional discriminator")
            return None
        if label is None:
            raise LabelError("conditional discriminator needs a label")
        labels = torch.as_tensor(label, dtype=torch.long, device=device)
        if labels.dim() == 0:
            labels = labels.expand(n)
        if labels.shape != (n,):
            raise LabelError(f"expected {n} labels, got shape {tuple(labels.shape)}")
        if bool((labels < 0).any()) or bool((labels >= self.label_count).any()):
            raise LabelError(f"labels must lie in 0..{self.label_count - 1}")
        return labels

    def sub_score(self, level: int, x: torch.Tensor, label=None) -> torch.Tensor:
        """Logits (N,) of sub-discriminator ``level`` (1-based)."""
        if not 1 <= level <= len(self.subs):
            raise ShapeError(f"level must lie in 1..{len(self.subs)}, got {level}")
        if self.shapes is not None and tuple(x.shape[2:]) != self.shapes[level - 1]:
            raise ShapeError(
                f"sub-discriminator {level} expects inputs of shape (N, C, "
                f"{', '.join(map(str, self.shapes[level - 1]))}), got {tuple(x.shape)}"
            )
        labels = self._labels(label, x.shape[0], x.device)
        return self.subs[level - 1](x, labels)

    def score(self, inputs: Sequence[torch.Tensor], label=None) -> List[torch.Tensor]:
        """Per-input logits, one entry per sub-discriminator."""
        if len(inputs) != len(self.subs):
            raise ShapeError(f"expected {len(self.subs)} inputs, got {len(inputs)}")
        return [self.sub_score(i + 1, x, label) for i, x in enumerate(inputs)]

    def forward(self, inputs: Sequence[torch.Tensor], label=None) -> torch.Tensor:
        """Summed logits over all sub-discriminators."""
        return aggregate_logits(self.score(inputs, label))
