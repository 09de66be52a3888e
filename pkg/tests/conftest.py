"""
Shared fixtures: tiny run documents that train in well under a second per
iteration on a CPU.
"""

import copy

import numpy as np
import pytest

from mlvgan.models.schemas import RunConfig

TINY_DOCUMENT = {
    "name": "tiny",
    "model": {
        "levels": 4,
        "rate": 2,
        "latent_dim": 8,
        "frames": 16,
        "height": 16,
        "width": 16,
        "upsample_blocks": [1, 1, 1, 1],
        "clstm_channels": 8,
        "channels": [8, 8, 8, 8],
        "z_channels": 4,
        "out_channels": 1,
    },
    "discriminator": {"channels": [4, 8]},
    "train": {
        "batch_size": 2,
        "max_iterations": 4,
        "snapshot_interval": 2,
        "log_interval": 1,
        "seed": 0,
    },
    "data": {
        "kind": "toy",
        "toy": {"height": 16, "width": 16, "frames": 16, "channels": 1, "label_count": 4},
    },
    "evaluation": {
        "snapshot_stride": 2,
        "samples": 8,
        "repeats": 2,
        "batch_size": 4,
        "embedder_resolution": 8,
        "embedder_iterations": 2,
    },
}


def tiny_document(**sections) -> dict:
    """Deep copy of the tiny document with per-section overrides merged in."""
    document = copy.deepcopy(TINY_DOCUMENT)
    for section, overrides in sections.items():
        if isinstance(overrides, dict):
            document.setdefault(section, {}).update(overrides)
        else:
            document[section] = overrides
    return document


def tiny_config(**sections) -> RunConfig:
    return RunConfig.model_validate(tiny_document(**sections))


@pytest.fixture
def config() -> RunConfig:
    return tiny_config()


@pytest.fixture
def conditional_config() -> RunConfig:
    return tiny_config(model={"label_count": 4})


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow experiment checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment check (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)
