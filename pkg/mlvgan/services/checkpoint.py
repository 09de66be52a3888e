"""
Snapshot container.

A snapshot is one ``torch.save`` file holding a format version, the run
document it was trained with and a state dictionary (network parameters,
optimizer moments, iteration count, random states).
"""

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import torch
from pydantic import ValidationError

from ..exceptions import CheckpointError
from ..models.generator import MultiLevelGenerator
from ..models.schemas import RunConfig

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
FINAL_NAME = "final.pt"
SNAPSHOT_PATTERN = re.compile(r"^snapshot_(\d+)\.pt$")


def snapshot_name(iteration: int) -> str:
    return f"snapshot_{iteration:07d}.pt"


def save_checkpoint(path: Union[str, Path], config: RunConfig, state: Dict[str, Any]) -> Path:
    """
    Write a snapshot atomically (temporary file, then rename).

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config.model_dump(mode="json"),
        "state": state,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, str(tmp))
    os.replace(tmp, path)
    logger.debug(f"Wrote snapshot {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[RunConfig, Dict[str, Any]]:
    """
    Read and validate a snapshot container.

    Raises:
        CheckpointError: missing file, unreadable container, unknown
            format version or invalid embedded run document
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as e:
        raise CheckpointError(f"Corrupt checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not an MLVGAN checkpoint")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    try:
        config = RunConfig.model_validate(payload["config"])
    except (KeyError, ValidationError) as e:
        raise CheckpointError(f"{path} holds an invalid run document: {e}") from e
    state = payload.get("state")
    if not isinstance(state, dict):
        raise CheckpointError(f"{path} holds no state")
    return config, state


def load_generator(path: Union[str, Path],
                   device: Union[str, torch.device] = "cpu") -> Tuple[MultiLevelGenerator, RunConfig]:
    """Rebuild the generator of a snapshot in inference mode."""
    config, state = load_checkpoint(path)
    generator = MultiLevelGenerator(config.model)
    try:
        generator.load_state_dict(state["generator"])
    except (KeyError, RuntimeError) as e:
        raise CheckpointError(f"Generator parameters in {path} do not match its config: {e}") from e
    return generator.to(device).eval(), config


def list_snapshots(run_dir: Union[str, Path]) -> List[Tuple[int, Path]]:
    """Periodic snapshots of a run directory as (iteration, path), oldest first."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        return []
    found = []
    for p in run_dir.iterdir():
        match = SNAPSHOT_PATTERN.match(p.name)
        if match:
            found.append((int(match.group(1)), p))
    return sorted(found)


def latest_snapshot(run_dir: Union[str, Path]) -> Optional[Path]:
    """``final.pt`` if present, otherwise the newest periodic snapshot."""
    final = Path(run_dir) / FINAL_NAME
    if final.exists():
        return final
    snapshots = list_snapshots(run_dir)
    return snapshots[-1][1] if snapshots else None
