"""
Frame subsampling.

Implements the training-time subsampling layer placed between consecutive
abstract blocks and the resize + subsample chain that turns one real clip
into the per-level pyramid seen by the sub-discriminators.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..exceptions import ShapeError

if TYPE_CHECKING:
    from ..models.schemas import ModelConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubsampleSpec:
    """One subsampling event: keep frames offset, offset+rate, ... (output_len of them)."""

    rate: int
    offset: int
    input_len: int
    output_len: int

    def __post_init__(self):
        if self.rate < 1 or self.input_len < 1:
            raise ValueError(f"rate and input_len must be positive, got {self.rate}, {self.input_len}")
        if self.output_len != math.ceil(self.input_len / self.rate):
            raise ValueError(
                f"output_len {self.output_len} != ceil({self.input_len}/{self.rate})"
            )
        if not 0 <= self.offset <= max_offset(self.input_len, self.rate):
            raise ValueError(
                f"offset {self.offset} outside 0..{max_offset(self.input_len, self.rate)}"
            )

    @property
    def indices(self) -> List[int]:
        return [self.offset + k * self.rate for k in range(self.output_len)]

    @property
    def is_identity(self) -> bool:
        return self.rate == 1


def max_offset(input_len: int, rate: int) -> int:
    """Largest offset that still yields ceil(input_len / rate) frames."""
    output_len = math.ceil(input_len / rate)
    return input_len - rate * (output_len - 1) - 1


def make_spec(input_len: int, rate: int, rng: np.random.Generator) -> SubsampleSpec:
    """
    Draw a subsampling spec with a uniformly random offset.

    Args:
        input_len: Frames entering the layer
        rate: Temporal reduction rate
        rng: Seeded random source

    Returns:
        SubsampleSpec with output_len = ceil(input_len / rate)
    """
    if input_len < 1 or rate < 1:
        raise ValueError(f"input_len and rate must be >= 1, got {input_len}, {rate}")
    output_len = math.ceil(input_len / rate)
    if rate == 1:
        return SubsampleSpec(rate=1, offset=0, input_len=input_len, output_len=output_len)
    offset = int(rng.integers(0, max_offset(input_len, rate) + 1))
    return SubsampleSpec(rate=rate, offset=offset, input_len=input_len, output_len=output_len)


def subsample_frames(h: torch.Tensor, spec: SubsampleSpec) -> torch.Tensor:
    """
    Keep frames ``spec.offset + k * spec.rate`` of an (N, C, T, H, W) tensor.

    Identity specs return ``h`` itself.
    """
    if h.dim() != 5:
        raise ShapeError(f"expected a rank-5 tensor, got shape {tuple(h.shape)}")
    if h.shape[2] != spec.input_len:
        raise ShapeError(
            f"spec expects {spec.input_len} frames, tensor has {h.shape[2]}"
        )
    if spec.is_identity:
        return h
    return h[:, :, spec.offset::spec.rate]


def junction_rates(rate: int, levels: int, enabled: Optional[Sequence[bool]] = None) -> List[int]:
    """Effective rate of each of the ``levels - 1`` junctions."""
    flags = list(enabled) if enabled is not None else [True] * (levels - 1)
    if len(flags) != levels - 1:
        raise ValueError(f"expected {levels - 1} junction flags, got {len(flags)}")
    return [rate if on else 1 for on in flags]


def frame_schedule(frames: int, rate: int, levels: int,
                   enabled: Optional[Sequence[bool]] = None) -> List[int]:
    """Frames per level on the training path: the ceil(. / rate) chain."""
    counts = [frames]
    for r in junction_rates(rate, levels, enabled):
        counts.append(math.ceil(counts[-1] / r))
    return counts


def resize_area(x: torch.Tensor, factor: int) -> torch.Tensor:
    """Shrink H and W of an (N, C, T, H, W) clip by an integer factor via area averaging."""
    if factor == 1:
        return x
    if x.shape[3] % factor or x.shape[4] % factor:
        raise ShapeError(f"resolution {tuple(x.shape[3:])} is not divisible by {factor}")
    return F.avg_pool3d(x, kernel_size=(1, factor, factor), stride=(1, factor, factor))


def real_pyramid(x: torch.Tensor, config: "ModelConfig", rng: np.random.Generator) -> List[torch.Tensor]:
    """
    Build the per-level real videos matching the generator's training outputs.

    Level ``l`` is resized by 1/2^(L-l) and passed through ``l - 1``
    subsampling functions, each with an offset drawn independently.
    A model that renders only its last level gets that level alone.

    Args:
        x: Real clips (N, C, T, H, W) at full resolution, values in [-1, 1]
        config: Generator configuration
        rng: Seeded random source

    Returns:
        List of L clips (or one), coarsest first
    """
    levels = config.levels
    if x.dim() != 5:
        raise ShapeError(f"expected a rank-5 tensor, got shape {tuple(x.shape)}")
    if x.shape[2] != config.frames:
        raise ShapeError(f"expected {config.frames} frames, got {x.shape[2]}")
    scale = 2 ** (levels - 1)
    if x.shape[3] % scale or x.shape[4] % scale:
        raise ShapeError(
            f"resolution {tuple(x.shape[3:])} is not divisible by 2^{levels - 1}"
        )
    rates = config.junction_rates()
    rendered = range(1, levels + 1) if config.render_all_levels else [levels]
    pyramid = []
    for level in rendered:
        clip = resize_area(x, 2 ** (levels - level))
        for rate in rates[: level - 1]:
            clip = subsample_frames(clip, make_spec(clip.shape[2], rate, rng))
        pyramid.append(clip)
    return pyramid
