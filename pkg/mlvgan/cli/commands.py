"""
Command handlers.

Each ``cmd_*`` function takes the parsed arguments, does its work through
the services and returns the process exit code.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Optional

import torch
from pydantic import ValidationError

from ..config import get_settings
from ..exceptions import ConfigError, EvaluationError
from ..models.embedder import VideoEmbedder
from ..models.generator import sample_noise
from ..models.presets import PREDEFINED_PRESETS, get_preset, list_presets
from ..models.schemas import RunConfig
from ..services import costmodel
from ..services.checkpoint import latest_snapshot, load_checkpoint, load_generator
from ..services.evaluation import (
    evaluate_snapshots,
    level_consistency,
    write_consistency_csv,
    write_score_table,
)
from ..services.metrics import train_embedder
from ..services.training import train
from .media import write_frames, write_gif, write_grid

logger = logging.getLogger(__name__)

EMBEDDER_NAME = "embedder.pt"
SCORES_NAME = "scores.csv"


# ---------------------------------------------------------------- helpers


def load_run_config(path: Optional[str] = None, preset: Optional[str] = None) -> RunConfig:
    """
    Read a run document from a JSON file or a preset name.

    Raises:
        ConfigError: neither or both given, missing file, invalid document
    """
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or --preset")
    if preset is not None:
        return get_preset(preset)
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file not found: {config_path}")
    try:
        return RunConfig.model_validate_json(config_path.read_text())
    except ValidationError as e:
        raise ConfigError(f"Invalid config {config_path}: {e}") from e


def _run_dir(args: argparse.Namespace, config: RunConfig) -> Path:
    if getattr(args, "run_dir", None):
        return Path(args.run_dir)
    return Path(config.output_dir or Path(args.output_root) / config.name)


def _with_seed(config: RunConfig, seed: Optional[int]) -> RunConfig:
    if seed is None:
        return config
    return config.model_copy(update={"train": config.train.model_copy(update={"seed": seed})})


def _cost_table(config: RunConfig, batch_size: int = 1) -> list:
    rates = sorted({r for r in (2, 4, config.model.rate) if r > 1})
    return costmodel.baseline_rows(config.model, config.discriminator, rates, batch_size)


def _labels(generator, n: int, label: Optional[int], noise_gen: torch.Generator):
    if label is not None or not generator.config.conditional:
        return label
    return torch.randint(0, generator.config.label_count, (n,), generator=noise_gen)


# ---------------------------------------------------------------- commands


def cmd_train(args: argparse.Namespace) -> int:
    config = _with_seed(load_run_config(args.config, args.preset), args.seed)
    if args.max_iterations is not None:
        config = config.model_copy(
            update={"train": config.train.model_copy(update={"max_iterations": args.max_iterations})}
        )
    if args.dry_run:
        print(f"Config '{config.name}' is valid.")
        print(costmodel.format_table(_cost_table(config, config.train.batch_size)))
        return 0
    run_dir = _run_dir(args, config)
    trainer = train(config, run_dir, resume=args.resume)
    print(f"Run directory: {run_dir} (iteration {trainer.iteration})")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    settings = get_settings()
    generator, config = load_generator(args.checkpoint, settings.device)
    noise_gen = torch.Generator().manual_seed(args.seed or 0)
    z = sample_noise(args.n, config.model.latent_dim, generator=noise_gen)
    labels = _labels(generator, args.n, args.label, noise_gen)
    with torch.no_grad():
        videos = generator.infer(z.to(settings.device), labels).cpu()

    out_dir = Path(args.out)
    for i, video in enumerate(videos):
        write_frames(video, out_dir / f"clip_{i:03d}")
        if args.gif:
            write_gif(video, out_dir / f"clip_{i:03d}.gif")
    if args.grid:
        write_grid(list(videos), args.grid, stride=args.stride)
    print(f"Wrote {args.n} clips to {out_dir}")
    return 0


def cmd_interpolate(args: argparse.Namespace) -> int:
    settings = get_settings()
    generator, config = load_generator(args.checkpoint, settings.device)
    d = config.model.latent_dim
    z1 = sample_noise(1, d, generator=torch.Generator().manual_seed(args.seed1))
    z2 = sample_noise(1, d, generator=torch.Generator().manual_seed(args.seed2))
    with torch.no_grad():
        videos = generator.interpolate(z1.to(settings.device), z2.to(settings.device), args.steps, args.label)
    videos = [v[0].cpu() for v in videos]

    out_dir = Path(args.out)
    for i, video in enumerate(videos):
        write_frames(video, out_dir / f"step_{i:03d}")
    write_grid(videos, out_dir / "interpolation.png", stride=args.stride)
    print(f"Wrote {len(videos)} interpolation steps to {out_dir}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    settings = get_settings()
    run_dir = Path(args.run_dir)
    config = None
    if args.config or args.preset:
        config = load_run_config(args.config, args.preset)
    elif latest_snapshot(run_dir) is not None:
        config = load_checkpoint(latest_snapshot(run_dir))[0]
    if config is None:
        raise EvaluationError(f"No snapshots in {run_dir}")
    protocol = config.evaluation
    embedder_path = Path(args.embedder or protocol.embedder_path or run_dir / EMBEDDER_NAME)
    if not embedder_path.exists():
        raise EvaluationError(f"Embedder not found: {embedder_path} (run train-embedder first)")
    embedder = VideoEmbedder.load(embedder_path).to(settings.device)
    if args.samples is not None:
        protocol = protocol.model_copy(update={"samples": args.samples})
    if args.repeats is not None:
        protocol = protocol.model_copy(update={"repeats": args.repeats})

    result = evaluate_snapshots(run_dir, protocol, embedder, config, seed=args.seed or 0)
    table = write_score_table(result.rows, args.out or run_dir / SCORES_NAME)
    print(f"Best snapshot: iteration {result.best.iteration} "
          f"(IS {result.best.is_mean:.3f}, FID {result.best.fid_mean:.3f}) -> {result.best.path}")
    print(f"Score table: {table}")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, args.preset)
    rows = _cost_table(config, args.batch_size)
    print(costmodel.format_table(rows))
    if args.csv:
        costmodel.write_csv(rows, args.csv)
    if args.budget is not None:
        plan = costmodel.plan(args.budget, config.model, config.discriminator)
        print(f"Plan for {args.budget} bytes: rate {plan.rate}, levels {plan.levels}, "
              f"batch size {plan.batch_size} ({plan.peak_bytes} bytes)")
    return 0


def cmd_consistency(args: argparse.Namespace) -> int:
    settings = get_settings()
    generator, _ = load_generator(args.checkpoint, settings.device)
    curves = level_consistency(generator, args.n, seed=args.seed or 0, label=args.label)
    path = write_consistency_csv(curves, args.out)
    print(f"Consistency curves: {path}")
    return 0


def cmd_train_embedder(args: argparse.Namespace) -> int:
    settings = get_settings()
    config = load_run_config(args.config, args.preset)
    protocol = config.evaluation
    if args.iterations is not None:
        protocol = protocol.model_copy(update={"embedder_iterations": args.iterations})
    embedder = train_embedder(config.data, protocol, seed=args.seed or 0, device=settings.device)
    out = Path(args.out or protocol.embedder_path or _run_dir(args, config) / EMBEDDER_NAME)
    out.parent.mkdir(parents=True, exist_ok=True)
    embedder.save(out)
    print(f"Embedder written to {out}")
    return 0


def cmd_presets(args: argparse.Namespace) -> int:
    if args.name:
        get_preset(args.name)
        print(json.dumps(PREDEFINED_PRESETS[args.name], indent=2))
        return 0
    for name in list_presets():
        print(name)
    return 0
