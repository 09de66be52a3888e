"""
Building blocks shared by the generator, discriminator and embedder.
"""

import math
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F


RESIDUAL_GAIN = math.sqrt(2.0)
SHORTCUT_GAIN = 1.0


def glorot_uniform_(weight: torch.Tensor, gain: float) -> torch.Tensor:
    """Scaled Glorot-uniform init; variance = gain^2 * 2 / (fan_in + fan_out)."""
    return nn.init.xavier_uniform_(weight, gain=gain)


def init_layer(layer: nn.Module, gain: float) -> nn.Module:
    """Glorot-initialize a conv/linear layer and zero its bias."""
    glorot_uniform_(layer.weight, gain)
    if getattr(layer, "bias", None) is not None:
        nn.init.zeros_(layer.bias)
    return layer


def frames_to_batch(x: torch.Tensor) -> torch.Tensor:
    """(N, C, T, H, W) -> (N*T, C, H, W), frame-major within each sample."""
    n, c, t, h, w = x.shape
    return x.permute(0, 2, 1, 3, 4).reshape(n * t, c, h, w)


def batch_to_frames(x: torch.Tensor, n: int) -> torch.Tensor:
    """Inverse of ``frames_to_batch``."""
    nt, c, h, w = x.shape
    return x.reshape(n, nt // n, c, h, w).permute(0, 2, 1, 3, 4)


class ConditionalBatchNorm2d(nn.Module):
    """
    Batch normalization with an optional per-class scale and shift.

    With ``label_count == 0`` this is a plain affine BatchNorm2d.
    """

    def __init__(self, num_features: int, label_count: int = 0):
        super().__init__()
        self.label_count = label_count
        if label_count > 0:
            self.bn = nn.BatchNorm2d(num_features, affine=False)
            self.gamma = nn.Embedding(label_count, num_features)
            self.beta = nn.Embedding(label_count, num_features)
            nn.init.ones_(self.gamma.weight)
            nn.init.zeros_(self.beta.weight)
        else:
            self.bn = nn.BatchNorm2d(num_features)

    def forward(self, x: torch.Tensor, labels: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.bn(x)
        if self.label_count == 0:
            return h
        gamma = self.gamma(labels)[:, :, None, None]
        beta = self.beta(labels)[:, :, None, None]
        return gamma * h + beta


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell with a square kernel and 'same' padding."""

    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int = 3,
                 forget_bias: float = 1.0):
        super().__init__()
        self.hidden_channels = hidden_channels
        self.forget_bias = forget_bias
        self.conv = nn.Conv2d(
            in_channels + hidden_channels,
            4 * hidden_channels,
            kernel_size,
            padding=kernel_size // 2,
        )
        init_layer(self.conv, SHORTCUT_GAIN)

    def initial_state(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        n, _, h, w = x.shape
        zeros = x.new_zeros(n, self.hidden_channels, h, w)
        return zeros, zeros.clone()

    def forward(
        self, x: torch.Tensor, state: Tuple[torch.Tensor, torch.Tensor]
    ) -> Tuple[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
        h, c = state
        gates = self.conv(torch.cat([x, h], dim=1))
        i, j, f, o = torch.chunk(gates, 4, dim=1)
        c = c * torch.sigmoid(f + self.forget_bias) + torch.sigmoid(i) * torch.tanh(j)
        h = torch.tanh(c) * torch.sigmoid(o)
        return h, (h, c)


class UpBlock(nn.Module):
    """
    Residual upsampling block applied frame by frame.

    Residual path: unpool -> conv3x3 -> norm -> ReLU -> conv3x3 -> norm -> ReLU.
    Shortcut path: unpool -> conv1x1 (only when the width changes).
    """

    def __init__(self, in_channels: int, out_channels: int, label_count: int = 0):
        super().__init__()
        self.conv1 = init_layer(nn.Conv2d(in_channels, out_channels, 3, padding=1), RESIDUAL_GAIN)
        self.norm1 = ConditionalBatchNorm2d(out_channels, label_count)
        self.conv2 = init_layer(nn.Conv2d(out_channels, out_channels, 3, padding=1), RESIDUAL_GAIN)
        self.norm2 = ConditionalBatchNorm2d(out_channels, label_count)
        self.shortcut = None
        if in_channels != out_channels:
            self.shortcut = init_layer(nn.Conv2d(in_channels, out_channels, 1), SHORTCUT_GAIN)

    def forward(self, x: torch.Tensor, labels: Optional[torch.Tensor] = None) -> torch.Tensor:
        up = F.interpolate(x, scale_factor=2, mode="nearest")
        h = F.relu(self.norm1(self.conv1(up), labels))
        h = F.relu(self.norm2(self.conv2(h), labels))
        skip = up if self.shortcut is None else self.shortcut(up)
        return h + skip


class RenderBlock(nn.Module):
    """Per-frame image head: norm -> ReLU -> conv3x3 -> tanh."""

    def __init__(self, in_channels: int, out_channels: int, label_count: int = 0):
        super().__init__()
        self.norm = ConditionalBatchNorm2d(in_channels, label_count)
        self.conv = init_layer(nn.Conv2d(in_channels, out_channels, 3, padding=1), SHORTCUT_GAIN)

    def forward(self, x: torch.Tensor, labels: Optional[torch.Tensor] = None) -> torch.Tensor:
        return torch.tanh(self.conv(F.relu(self.norm(x, labels))))


def downsample(x: torch.Tensor) -> torch.Tensor:
    """
    Average-pool every spatial/temporal axis of size > 1 by two.

    Axes of size one are left alone; odd-sized axes are padded by one so
    the output length is ceil(n / 2), and padded cells are excluded from
    the average. Works on 4D (2D maps) and 5D inputs.
    """
    sizes = x.shape[2:]
    kernel = tuple(2 if s > 1 else 1 for s in sizes)
    padding = tuple(1 if s > 1 and s % 2 else 0 for s in sizes)
    if all(k == 1 for k in kernel):
        return x
    if x.dim() == 5:
        return F.avg_pool3d(x, kernel, stride=kernel, padding=padding, count_include_pad=False)
    return F.avg_pool2d(x, kernel, stride=kernel, padding=padding, count_include_pad=False)


def downsampled_size(size: int) -> int:
    """Length of one axis after ``downsample``."""
    return size if size <= 1 else math.ceil(size / 2)


class DownBlock(nn.Module):
    """
    Residual downsampling block for 2D or 3D discriminators.

    The first block of a network (``first=True``) skips the leading
    activation and pools before its shortcut convolution.
    """

    def __init__(self, in_channels: int, out_channels: int, dims: int = 3, first: bool = False):
        super().__init__()
        conv = nn.Conv3d if dims == 3 else nn.Conv2d
        self.first = first
        self.conv1 = init_layer(conv(in_channels, out_channels, 3, padding=1), RESIDUAL_GAIN)
        self.conv2 = init_layer(conv(out_channels, out_channels, 3, padding=1), RESIDUAL_GAIN)
        self.shortcut = init_layer(conv(in_channels, out_channels, 1), SHORTCUT_GAIN)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = x if self.first else F.relu(x)
        h = self.conv2(F.relu(self.conv1(h)))
        h = downsample(h)
        if self.first:
            skip = self.shortcut(downsample(x))
        else:
            skip = downsample(self.shortcut(x))
        return h + skip
