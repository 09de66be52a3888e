"""
Declarative run documents.

A run is described by one ``RunConfig`` document holding the generator,
discriminator, training, data and evaluation sections. Every section
rejects unknown keys and is validated before any work starts.
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..services import subsampling


class ModelConfig(BaseModel):
    """Generator configuration: levels, subsampling rate, widths, output shape."""

    model_config = ConfigDict(extra="forbid")

    levels: int = Field(4, ge=1)
    rate: int = Field(2, ge=1)
    # One flag per junction between consecutive abstract blocks; None = all on
    subsample_enabled: Optional[List[bool]] = None
    latent_dim: int = Field(256, ge=1)
    frames: int = Field(16, ge=1)
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    # Upsampling blocks per abstract block; the first entry follows the CLSTM
    upsample_blocks: List[int] = Field(default_factory=lambda: [1, 1, 1, 1])
    clstm_channels: int = Field(128, ge=1)
    # One width per upsampling block
    channels: List[int] = Field(default_factory=lambda: [64, 32, 16, 8])
    z_channels: int = Field(16, ge=1)
    out_channels: int = Field(3, ge=1)
    label_count: int = Field(0, ge=0)
    render_all_levels: bool = True

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelConfig":
        if len(self.upsample_blocks) != self.levels:
            raise ValueError(
                f"upsample_blocks needs {self.levels} entries, got {len(self.upsample_blocks)}"
            )
        if self.upsample_blocks[0] < 0 or any(b != 1 for b in self.upsample_blocks[1:]):
            raise ValueError("levels after the first must hold exactly one upsampling block")
        total = self.total_upsample_blocks
        if len(self.channels) != total:
            raise ValueError(f"channels needs {total} entries, got {len(self.channels)}")
        if any(c < 1 for c in self.channels):
            raise ValueError("channel widths must be positive")
        factor = 2 ** total
        if self.height % factor or self.width % factor:
            raise ValueError(
                f"resolution {self.height}x{self.width} is not divisible by 2^{total}"
            )
        if self.subsample_enabled is not None and len(self.subsample_enabled) != self.levels - 1:
            raise ValueError(
                f"subsample_enabled needs {self.levels - 1} entries, got {len(self.subsample_enabled)}"
            )
        return self

    @property
    def conditional(self) -> bool:
        return self.label_count > 0

    @property
    def total_upsample_blocks(self) -> int:
        return sum(self.upsample_blocks)

    @property
    def base_height(self) -> int:
        return self.height // 2 ** self.total_upsample_blocks

    @property
    def base_width(self) -> int:
        return self.width // 2 ** self.total_upsample_blocks

    def level_resolution(self, level: int) -> Tuple[int, int]:
        """Spatial size of level ``level`` (1-based)."""
        scale = 2 ** (self.levels - level)
        return self.height // scale, self.width // scale

    def level_channels(self, level: int) -> int:
        """Width of the abstract map leaving abstract block ``level``."""
        last_block = sum(self.upsample_blocks[:level]) - 1
        if last_block < 0:
            return self.clstm_channels + self.z_channels
        return self.channels[last_block]

    def junction_flags(self) -> List[bool]:
        """
        Which junctions subsample on the training path.

        A model rendering only its last level has a single output video, so
        any enabled junction is equivalent to the first one alone: only the
        first flag is kept.
        """
        enabled = list(self.subsample_enabled or [True] * (self.levels - 1))
        if not self.render_all_levels and enabled:
            enabled = [enabled[0]] + [False] * (len(enabled) - 1)
        return enabled

    def junction_rates(self) -> List[int]:
        """Effective rate of each of the ``levels - 1`` subsampling junctions."""
        return subsampling.junction_rates(self.rate, self.levels, self.junction_flags())

    def frame_counts(self) -> List[int]:
        """Frames at each level on the training path."""
        return subsampling.frame_schedule(self.frames, self.rate, self.levels, self.junction_flags())


class DiscriminatorConfig(BaseModel):
    """Sub-discriminator topology shared by every level."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["multilevel", "single-3d", "3d+2d"] = "multilevel"
    # Filled from the generator section when omitted
    levels: Optional[int] = Field(None, ge=1)
    label_count: Optional[int] = Field(None, ge=0)
    # One width per residual block
    channels: List[int] = Field(default_factory=lambda: [32, 64, 128, 256])
    # Residual blocks of the 2D frame discriminator (3d+2d only)
    frame_channels: Optional[List[int]] = None

    @model_validator(mode="after")
    def _check_channels(self) -> "DiscriminatorConfig":
        if not self.channels or any(c < 1 for c in self.channels):
            raise ValueError("discriminator channels must be a non-empty list of positive widths")
        return self


class TrainConfig(BaseModel):
    """Optimizer, schedule and snapshot settings."""

    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(8, ge=1)
    max_iterations: int = Field(5000, ge=0)
    lr: float = Field(1e-4, ge=0.0)
    betas: Tuple[float, float] = (0.0, 0.9)
    r1_weight: float = Field(0.5, ge=0.0)
    d_steps: int = Field(1, ge=1)
    snapshot_interval: int = Field(2000, ge=1)
    log_interval: int = Field(50, ge=1)
    seed: int = 0


class ClipRequest(BaseModel):
    """How a clip is cut out of a source video."""

    model_config = ConfigDict(extra="forbid")

    frames: int = Field(16, ge=1)
    crop: Literal["center", "none"] = "center"
    height: int = Field(64, ge=1)
    width: int = Field(64, ge=1)
    channels: Literal[1, 3] = 3
    flip_prob: float = Field(0.5, ge=0.0, le=1.0)


class ToyDatasetConfig(BaseModel):
    """Synthetic moving-shapes clips."""

    model_config = ConfigDict(extra="forbid")

    height: int = Field(64, ge=4)
    width: int = Field(64, ge=4)
    frames: int = Field(16, ge=1)
    channels: Literal[1, 3] = 1
    shape_count: int = Field(1, ge=1)
    shape_size: float = Field(0.25, gt=0.0, le=1.0)  # side as a fraction of the short edge
    min_speed: float = Field(0.5, ge=0.0)  # pixels per frame
    max_speed: float = Field(2.0, ge=0.0)
    label_count: int = Field(4, ge=1)  # motion direction classes

    @model_validator(mode="after")
    def _check_speed(self) -> "ToyDatasetConfig":
        if self.max_speed < self.min_speed:
            raise ValueError("max_speed must not be below min_speed")
        return self


class DataConfig(BaseModel):
    """Where real clips come from."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["toy", "folder"] = "toy"
    root: Optional[str] = None
    clip: ClipRequest = Field(default_factory=ClipRequest)
    toy: ToyDatasetConfig = Field(default_factory=ToyDatasetConfig)

    @model_validator(mode="after")
    def _check_root(self) -> "DataConfig":
        if self.kind == "folder" and not self.root:
            raise ValueError("folder datasets need a root directory")
        return self

    def output_shape(self) -> Tuple[int, int, int, int]:
        """(C, T, H, W) of every emitted clip."""
        if self.kind == "toy":
            return self.toy.channels, self.toy.frames, self.toy.height, self.toy.width
        return self.clip.channels, self.clip.frames, self.clip.height, self.clip.width


class EvalProtocol(BaseModel):
    """Snapshot evaluation settings."""

    model_config = ConfigDict(extra="forbid")

    snapshot_stride: int = Field(2000, ge=1)
    samples: int = Field(2048, ge=2)
    repeats: int = Field(10, ge=1)
    batch_size: int = Field(64, ge=1)
    embedder_path: Optional[str] = None
    embedder_resolution: int = Field(32, ge=4)
    embedder_iterations: int = Field(500, ge=0)


class RunConfig(BaseModel):
    """Complete description of one training run."""

    model_config = ConfigDict(extra="forbid")

    name: str = "run"
    model: ModelConfig = Field(default_factory=ModelConfig)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    evaluation: EvalProtocol = Field(default_factory=EvalProtocol)
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_consistency(self) -> "RunConfig":
        model, disc = self.model, self.discriminator
        if disc.levels is None:
            disc.levels = model.levels
        if disc.label_count is None:
            disc.label_count = model.label_count
        if disc.levels != model.levels:
            raise ValueError(
                f"discriminator has {disc.levels} levels, generator has {model.levels}"
            )
        if disc.label_count != model.label_count:
            raise ValueError("discriminator and generator disagree on label_count")
        if disc.kind != "multilevel" and model.render_all_levels:
            raise ValueError(f"'{disc.kind}' discriminators need render_all_levels=false")
        if disc.kind == "multilevel" and not model.render_all_levels:
            raise ValueError("the multilevel discriminator needs every rendering block")

        channels, frames, height, width = self.data.output_shape()
        if (channels, frames, height, width) != (
            model.out_channels,
            model.frames,
            model.height,
            model.width,
        ):
            raise ValueError(
                f"data clips {(channels, frames, height, width)} do not match the generator "
                f"output {(model.out_channels, model.frames, model.height, model.width)}"
            )
        if model.conditional and self.data.kind == "toy":
            if self.data.toy.label_count != model.label_count:
                raise ValueError("toy label_count must equal the generator label_count")
        return self
