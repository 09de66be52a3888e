"""
Run documents, presets and networks of MLVGAN.
"""

from .schemas import (
    ClipRequest,
    DataConfig,
    DiscriminatorConfig,
    EvalProtocol,
    ModelConfig,
    RunConfig,
    ToyDatasetConfig,
    TrainConfig,
)
from .presets import PREDEFINED_PRESETS, get_preset, list_presets
from .generator import MultiLevelGenerator, level_shapes, sample_noise
from .discriminator import MultiLevelDiscriminator, aggregate, aggregate_logits
from .embedder import VideoEmbedder

__all__ = [
    "ClipRequest",
    "DataConfig",
    "DiscriminatorConfig",
    "EvalProtocol",
    "ModelConfig",
    "RunConfig",
    "ToyDatasetConfig",
    "TrainConfig",
    "PREDEFINED_PRESETS",
    "get_preset",
    "list_presets",
    "MultiLevelGenerator",
    "level_shapes",
    "sample_noise",
    "MultiLevelDiscriminator",
    "aggregate",
    "aggregate_logits",
    "VideoEmbedder",
]
