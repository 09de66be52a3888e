"""
Predefined run documents.
"""

import copy
from typing import Dict, List

from pydantic import ValidationError

from ..exceptions import ConfigError
from .schemas import RunConfig


_DESK_64 = {
    "name": "desk-64px",
    "model": {
        "levels": 4,
        "rate": 2,
        "latent_dim": 256,
        "frames": 16,
        "height": 64,
        "width": 64,
        "upsample_blocks": [1, 1, 1, 1],
        "clstm_channels": 128,
        "channels": [64, 32, 16, 8],
        "z_channels": 16,
        "out_channels": 1,
    },
    "discriminator": {"channels": [32, 64, 128, 256]},
    "train": {
        "batch_size": 8,
        "max_iterations": 5000,
        "r1_weight": 0.5,
        "snapshot_interval": 500,
        "log_interval": 50,
    },
    "data": {
        "kind": "toy",
        "toy": {"height": 64, "width": 64, "frames": 16, "channels": 1, "label_count": 4},
    },
    "evaluation": {"snapshot_stride": 500, "samples": 256, "repeats": 3, "batch_size": 32},
}


def _derive(base: Dict, name: str, **sections: Dict) -> Dict:
    """Deep-copy ``base`` and merge the given section overrides."""
    document = copy.deepcopy(base)
    document["name"] = name
    for section, overrides in sections.items():
        document.setdefault(section, {}).update(overrides)
    return document


# Full-scale layouts: three upsampling blocks ahead of the first rendering
# block, then one per level (six in total)
_FULL_SCALE_MODEL = {
    "levels": 4,
    "rate": 2,
    "latent_dim": 256,
    "frames": 16,
    "upsample_blocks": [3, 1, 1, 1],
    "clstm_channels": 1024,
    "channels": [1024, 512, 256, 128, 64, 32],
    "z_channels": 64,
    "out_channels": 3,
}

_FULL_SCALE_TRAIN = {
    "batch_size": 32,
    "max_iterations": 100000,
    "r1_weight": 0.5,
    "snapshot_interval": 2000,
    "log_interval": 100,
}


PREDEFINED_PRESETS: Dict[str, Dict] = {
    "desk-64px": _DESK_64,
    "desk-16px": _derive(
        _DESK_64,
        "desk-16px",
        model={"height": 16, "width": 16, "clstm_channels": 32, "channels": [32, 16, 8, 8]},
        discriminator={"channels": [16, 32, 64]},
        train={"batch_size": 8, "max_iterations": 2000, "snapshot_interval": 500},
        data={"kind": "toy", "toy": {"height": 16, "width": 16, "frames": 16, "channels": 1,
                                     "shape_size": 0.35, "min_speed": 0.25, "max_speed": 0.75,
                                     "label_count": 4}},
        evaluation={"snapshot_stride": 500, "samples": 128, "repeats": 3,
                    "embedder_resolution": 16},
    ),
    "naive-64px": _derive(_DESK_64, "naive-64px", model={**_DESK_64["model"], "rate": 1}),
    # rate > 1 puts one subsampling layer in front of the single rendered video
    "single-3D": _derive(
        _DESK_64,
        "single-3D",
        model={**_DESK_64["model"], "rate": 1, "render_all_levels": False},
        discriminator={"kind": "single-3d"},
        train={**_DESK_64["train"], "r1_weight": 10.0},
    ),
    "3D+2D": _derive(
        _DESK_64,
        "3D+2D",
        model={**_DESK_64["model"], "rate": 1, "render_all_levels": False},
        discriminator={"kind": "3d+2d", "frame_channels": [32, 64, 128, 256]},
        train={**_DESK_64["train"], "r1_weight": 10.0},
    ),
    "paper-192px": {
        "name": "paper-192px",
        "model": {**_FULL_SCALE_MODEL, "height": 192, "width": 192},
        "discriminator": {"channels": [64, 128, 256, 512, 1024]},
        "train": _FULL_SCALE_TRAIN,
        "data": {
            "kind": "folder",
            "root": "./data/ucf101",
            "clip": {"frames": 16, "crop": "center", "height": 192, "width": 192,
                     "channels": 3, "flip_prob": 0.5},
        },
        "evaluation": {"snapshot_stride": 2000, "samples": 2048, "repeats": 10},
    },
    "paper-256px": {
        "name": "paper-256px",
        "model": {**_FULL_SCALE_MODEL, "height": 256, "width": 256},
        "discriminator": {"channels": [64, 128, 256, 512, 1024]},
        "train": _FULL_SCALE_TRAIN,
        "data": {
            "kind": "folder",
            "root": "./data/faceforensics",
            "clip": {"frames": 16, "crop": "center", "height": 256, "width": 256,
                     "channels": 3, "flip_prob": 0.5},
        },
        "evaluation": {"snapshot_stride": 2000, "samples": 2048, "repeats": 10},
    },
}


def list_presets() -> List[str]:
    """Names of all predefined run documents."""
    return sorted(PREDEFINED_PRESETS)


def get_preset(name: str) -> RunConfig:
    """
    Build a validated run document from a preset.

    Args:
        name: Preset name (see ``list_presets``)

    Returns:
        RunConfig for the preset

    Raises:
        ConfigError: unknown preset name
    """
    if name not in PREDEFINED_PRESETS:
        raise ConfigError(f"Unknown preset '{name}'. Valid presets: {list_presets()}")
    try:
        return RunConfig.model_validate(copy.deepcopy(PREDEFINED_PRESETS[name]))
    except ValidationError as e:
        raise ConfigError(f"Preset '{name}' is invalid: {e}") from e
