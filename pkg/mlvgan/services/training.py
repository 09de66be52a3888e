"""
Adversarial training.

Implements the losses over summed per-level logits, the zero-centered
gradient penalty on real inputs, the linear learning-rate decay and the
training loop with periodic snapshots.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from ..config import get_settings
from ..exceptions import CheckpointError, DivergenceError, GradientPathError, LabelError, ShapeError
from ..models.discriminator import MultiLevelDiscriminator, aggregate_logits, input_shapes, select_frame
from ..models.generator import MultiLevelGenerator, sample_noise
from ..models.schemas import RunConfig
from .checkpoint import (
    FINAL_NAME,
    latest_snapshot,
    load_checkpoint,
    save_checkpoint,
    snapshot_name,
)
from .data import make_source
from .subsampling import real_pyramid

logger = logging.getLogger(__name__)

LOG_NAME = "log.csv"
CONFIG_NAME = "config.json"
LOG_COLUMNS = ["iteration", "d_loss", "g_loss", "r1", "lr"]


# ---------------------------------------------------------------- objective


def d_loss(real_logit_sum: torch.Tensor, fake_logit_sum: torch.Tensor) -> torch.Tensor:
    """Discriminator loss: mean of softplus(-real) + softplus(fake)."""
    if real_logit_sum.shape != fake_logit_sum.shape:
        raise ShapeError(
            f"real and fake logits differ in shape: {tuple(real_logit_sum.shape)} "
            f"vs {tuple(fake_logit_sum.shape)}"
        )
    return (F.softplus(-real_logit_sum) + F.softplus(fake_logit_sum)).mean()


def g_loss(fake_logit_sum: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss: mean softplus(-fake)."""
    return F.softplus(-fake_logit_sum).mean()


def gradient_penalty(scores: Sequence[torch.Tensor], inputs: Sequence[torch.Tensor],
                     weight: float) -> torch.Tensor:
    """
    weight * sum over levels and samples of the squared input-gradient norm.

    ``scores[l]`` must have been computed from ``inputs[l]``, which must
    require grad. A score that does not depend on its input (a constant
    discriminator) contributes zero.

    Raises:
        GradientPathError: non-float input or non-finite gradient
    """
    if len(scores) != len(inputs):
        raise ShapeError(f"{len(scores)} scores for {len(inputs)} inputs")
    if not inputs:
        raise ShapeError("no inputs to penalize")
    total = inputs[0].new_zeros(())
    for level, (score, x) in enumerate(zip(scores, inputs), start=1):
        if not x.is_floating_point() or not x.requires_grad:
            raise GradientPathError(f"level {level} input is not differentiable")
        if not score.requires_grad:
            continue
        (grad,) = torch.autograd.grad(score.sum(), x, create_graph=True, allow_unused=True)
        if grad is None:
            continue
        squared = grad.pow(2).sum()
        if not torch.isfinite(squared):
            raise GradientPathError(f"level {level} has a non-finite input gradient")
        total = total + squared
    return weight * total


def r1_penalty(discriminators: Sequence[Callable[[torch.Tensor], torch.Tensor]],
               real_levels: Sequence[torch.Tensor], weight: float) -> torch.Tensor:
    """
    Zero-centered gradient penalty on real inputs.

    Args:
        discriminators: One callable per level mapping its input to logits (N,)
        real_levels: Real (pyramid-transformed) inputs, one per level
        weight: Penalty weight (lambda)
    """
    if len(discriminators) != len(real_levels):
        raise ShapeError(f"{len(discriminators)} discriminators for {len(real_levels)} inputs")
    inputs = []
    for x in real_levels:
        if not x.is_floating_point():
            raise GradientPathError("real inputs must be floating point")
        inputs.append(x.detach().requires_grad_(True))
    scores = [d(x) for d, x in zip(discriminators, inputs)]
    return gradient_penalty(scores, inputs, weight)


def linear_decay(iteration: int, max_iterations: int) -> float:
    """Learning-rate multiplier: 1 at iteration 0, 0 at max_iterations and beyond."""
    if max_iterations <= 0:
        return 0.0
    return max(0.0, 1.0 - iteration / max_iterations)


def snapshot_schedule(interval: int, max_iterations: int) -> List[int]:
    """Iterations after which a periodic snapshot is written (final.pt comes on top)."""
    if interval < 1:
        raise ValueError(f"snapshot interval must be >= 1, got {interval}")
    return list(range(interval, max_iterations + 1, interval))


def discriminator_inputs(videos: List[torch.Tensor], kind: str,
                         rng: np.random.Generator) -> List[torch.Tensor]:
    """Map generator-shaped videos to the inputs of each sub-discriminator."""
    if kind == "multilevel":
        return videos
    full = videos[-1]
    if kind == "single-3d":
        return [full]
    return [full, select_frame(full, int(rng.integers(0, full.shape[2])))]


@dataclass
class LossReport:
    """Losses of one training iteration."""
    iteration: int
    d_loss: float
    g_loss: float
    r1: float
    lr: float
    real_logit_means: List[float] = field(default_factory=list)
    fake_logit_means: List[float] = field(default_factory=list)

    def csv_row(self) -> List[str]:
        return [str(self.iteration), repr(self.d_loss), repr(self.g_loss), repr(self.r1), repr(self.lr)]

    @property
    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.d_loss, self.g_loss, self.r1))


def _means(scores: Sequence[torch.Tensor]) -> List[float]:
    return [float(s.detach().mean()) for s in scores]


# ---------------------------------------------------------------- trainer


class Trainer:
    """
    Training state: both networks, their Adam optimizers and schedules,
    the iteration counter and every random source.

    Random sources:
    - ``noise_gen`` (torch) draws noise vectors and fake labels
    - ``rng`` (numpy) draws subsampling offsets and 2D frame indices
    - ``data_rng`` (numpy) draws real batches
    """

    def __init__(self, config: RunConfig, device: Optional[Union[str, torch.device]] = None):
        self.config = config
        self.device = torch.device(device or get_settings().device)
        seed = config.train.seed

        torch.manual_seed(seed)
        self.generator = MultiLevelGenerator(config.model).to(self.device)
        self.discriminator = MultiLevelDiscriminator(
            config.discriminator,
            config.model.out_channels,
            input_shapes(config.model, config.discriminator.kind),
        ).to(self.device)

        train = config.train
        self.g_optimizer = torch.optim.Adam(self.generator.parameters(), lr=train.lr, betas=train.betas)
        self.d_optimizer = torch.optim.Adam(self.discriminator.parameters(), lr=train.lr, betas=train.betas)
        decay = lambda it: linear_decay(it, train.max_iterations)  # noqa: E731
        self.g_scheduler = torch.optim.lr_scheduler.LambdaLR(self.g_optimizer, decay)
        self.d_scheduler = torch.optim.lr_scheduler.LambdaLR(self.d_optimizer, decay)

        self.iteration = 0
        self.noise_gen = torch.Generator().manual_seed(seed)
        offsets_seed, data_seed = np.random.SeedSequence(seed).spawn(2)
        self.rng = np.random.default_rng(offsets_seed)
        self.data_rng = np.random.default_rng(data_seed)

    # ------------------------------------------------------------ sampling

    @property
    def lr(self) -> float:
        return float(self.d_optimizer.param_groups[0]["lr"])

    def _noise(self, n: int) -> torch.Tensor:
        return sample_noise(n, self.config.model.latent_dim, generator=self.noise_gen).to(self.device)

    def _fake_labels(self, n: int) -> Optional[torch.Tensor]:
        k = self.config.model.label_count
        if k == 0:
            return None
        return torch.randint(0, k, (n,), generator=self.noise_gen).to(self.device)

    def _real_inputs(self, real: torch.Tensor) -> List[torch.Tensor]:
        pyramid = real_pyramid(real, self.config.model, self.rng)
        return discriminator_inputs(pyramid, self.config.discriminator.kind, self.rng)

    def _fake_inputs(self, n: int, labels: Optional[torch.Tensor]) -> List[torch.Tensor]:
        videos = self.generator.train_forward(self._noise(n), self.rng, labels)
        return discriminator_inputs(videos, self.config.discriminator.kind, self.rng)

    # ------------------------------------------------------------ updates

    def discriminator_step(self, real: torch.Tensor,
                           labels: Optional[torch.Tensor] = None) -> Tuple[float, float, List[float], List[float]]:
        """
        One discriminator update on d_loss + gradient penalty.

        Returns:
            (d_loss, penalty, real logit means, fake logit means)
        """
        n = real.shape[0]
        weight = self.config.train.r1_weight
        real_inputs = [x.detach().requires_grad_(weight > 0) for x in self._real_inputs(real)]
        fake_labels = self._fake_labels(n)
        with torch.no_grad():
            fake_inputs = self._fake_inputs(n, fake_labels)

        real_scores = self.discriminator.score(real_inputs, labels)
        fake_scores = self.discriminator.score(fake_inputs, fake_labels)
        loss = d_loss(aggregate_logits(real_scores), aggregate_logits(fake_scores))
        if weight > 0:
            penalty = gradient_penalty(real_scores, real_inputs, weight)
        else:
            penalty = loss.new_zeros(())
        real_means, fake_means = _means(real_scores), _means(fake_scores)
        self._check_finite("discriminator", loss + penalty, real_means, fake_means)

        self.d_optimizer.zero_grad(set_to_none=True)
        (loss + penalty).backward()
        self.d_optimizer.step()
        return float(loss.detach()), float(penalty.detach()), real_means, fake_means

    def generator_step(self, n: int) -> float:
        """One generator update on g_loss; discriminator parameters are frozen meanwhile."""
        labels = self._fake_labels(n)
        self.discriminator.requires_grad_(False)
        try:
            scores = self.discriminator.score(self._fake_inputs(n, labels), labels)
            loss = g_loss(aggregate_logits(scores))
            self._check_finite("generator", loss, [], _means(scores))
            self.g_optimizer.zero_grad(set_to_none=True)
            loss.backward()
            self.g_optimizer.step()
        finally:
            self.discriminator.requires_grad_(True)
        return float(loss.detach())

    def _check_finite(self, phase: str, loss: torch.Tensor, real_means: List[float],
                      fake_means: List[float]) -> None:
        if torch.isfinite(loss):
            return
        means = {"real": real_means, "fake": fake_means}
        logger.error(f"Non-finite {phase} loss at iteration {self.iteration}; logit means {means}")
        raise DivergenceError(
            f"non-finite {phase} loss at iteration {self.iteration}; per-level logit means {means}",
            logit_means=means,
        )

    def train_step(self, real: torch.Tensor, labels: Optional[torch.Tensor] = None,
                   update_generator: bool = True) -> LossReport:
        """
        One iteration: ``d_steps`` discriminator updates, then one generator update.

        Every update draws fresh noise and fresh subsampling offsets.
        """
        if self.config.model.conditional and labels is None:
            raise LabelError("conditional training needs labelled real clips")
        if not self.config.model.conditional:
            labels = None
        real = real.to(self.device)
        if labels is not None:
            labels = labels.to(self.device)
        self.generator.train()
        self.discriminator.train()

        lr = self.lr
        for _ in range(self.config.train.d_steps):
            d_value, penalty, real_means, fake_means = self.discriminator_step(real, labels)
        g_value = self.generator_step(real.shape[0]) if update_generator else float("nan")

        self.g_scheduler.step()
        self.d_scheduler.step()
        self.iteration += 1
        return LossReport(
            iteration=self.iteration,
            d_loss=d_value,
            g_loss=g_value,
            r1=penalty,
            lr=lr,
            real_logit_means=real_means,
            fake_logit_means=fake_means,
        )

    # ------------------------------------------------------------ state

    def state_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "generator": self.generator.state_dict(),
            "discriminator": self.discriminator.state_dict(),
            "g_optimizer": self.g_optimizer.state_dict(),
            "d_optimizer": self.d_optimizer.state_dict(),
            "g_scheduler": self.g_scheduler.state_dict(),
            "d_scheduler": self.d_scheduler.state_dict(),
            "rng": {
                "noise": self.noise_gen.get_state(),
                "offsets": self.rng.bit_generator.state,
                "data": self.data_rng.bit_generator.state,
            },
        }

    def load_state_dict(self, state: dict) -> None:
        self.generator.load_state_dict(state["generator"])
        self.discriminator.load_state_dict(state["discriminator"])
        self.g_optimizer.load_state_dict(state["g_optimizer"])
        self.d_optimizer.load_state_dict(state["d_optimizer"])
        self.g_scheduler.load_state_dict(state["g_scheduler"])
        self.d_scheduler.load_state_dict(state["d_scheduler"])
        self.noise_gen.set_state(state["rng"]["noise"])
        self.rng.bit_generator.state = state["rng"]["offsets"]
        self.data_rng.bit_generator.state = state["rng"]["data"]
        self.iteration = int(state["iteration"])

    def snapshot(self, path: Union[str, Path]) -> Path:
        """Write the complete training state to ``path``."""
        return save_checkpoint(path, self.config, self.state_dict())

    @classmethod
    def restore(cls, path: Union[str, Path], config: Optional[RunConfig] = None,
                device: Optional[Union[str, torch.device]] = None) -> "Trainer":
        """
        Rebuild a trainer from a snapshot.

        Args:
            path: Snapshot file
            config: Run document to continue with; its model and
                discriminator sections must equal the stored ones
            device: Target device

        Raises:
            CheckpointError: unreadable snapshot or architecture mismatch
        """
        stored, state = load_checkpoint(path)
        if config is not None:
            if config.model != stored.model or config.discriminator != stored.discriminator:
                raise CheckpointError(f"{path} was trained with a different model configuration")
        trainer = cls(config or stored, device)
        try:
            trainer.load_state_dict(state)
        except (KeyError, RuntimeError, ValueError, TypeError) as e:
            raise CheckpointError(f"Cannot restore {path}: {e}") from e
        return trainer

    # ------------------------------------------------------------ loop

    def run(self, run_dir: Union[str, Path], source=None) -> Path:
        """
        Train until ``max_iterations``; write the loss CSV, periodic
        snapshots and ``final.pt`` into ``run_dir``.

        Returns:
            Path of the final checkpoint
        """
        run_dir = Path(run_dir)
        train = self.config.train
        final = run_dir / FINAL_NAME
        if self.iteration >= train.max_iterations:
            logger.info(f"Run {run_dir} already at iteration {self.iteration}; nothing to do")
            return final

        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / CONFIG_NAME).write_text(self.config.model_dump_json(indent=2))
        source = source or make_source(self.config.data)
        log_path = run_dir / LOG_NAME
        snapshots = set(snapshot_schedule(train.snapshot_interval, train.max_iterations))
        _truncate_log(log_path, self.iteration)
        new_log = not log_path.exists()

        logger.info(
            f"Training {self.config.name}: iterations {self.iteration}..{train.max_iterations}, "
            f"batch {train.batch_size}, device {self.device}"
        )
        with open(log_path, "a", newline="") as f:
            writer = csv.writer(f)
            if new_log:
                writer.writerow(LOG_COLUMNS)
            while self.iteration < train.max_iterations:
                real, labels = source.sample_batch(train.batch_size, self.data_rng)
                report = self.train_step(real, labels)
                writer.writerow(report.csv_row())
                if report.iteration % train.log_interval == 0:
                    f.flush()
                    logger.info(
                        f"iter {report.iteration}: d_loss={report.d_loss:.4f} "
                        f"g_loss={report.g_loss:.4f} r1={report.r1:.4f} lr={report.lr:.2e}"
                    )
                if report.iteration in snapshots:
                    f.flush()
                    self.snapshot(run_dir / snapshot_name(report.iteration))
        self.snapshot(final)
        logger.info(f"Training finished; final checkpoint {final}")
        return final


def _truncate_log(log_path: Path, iteration: int) -> None:
    """Drop log rows written after ``iteration`` (left behind by an interrupted run)."""
    if not log_path.exists():
        return
    if iteration == 0:
        log_path.unlink()
        return
    with open(log_path, newline="") as f:
        rows = list(csv.reader(f))
    kept = [rows[0]] + [r for r in rows[1:] if r and int(r[0]) <= iteration]
    with open(log_path, "w", newline="") as f:
        csv.writer(f).writerows(kept)


def train(config: RunConfig, run_dir: Union[str, Path], resume: bool = False,
          source=None) -> Trainer:
    """
    Train a run, optionally continuing from the newest snapshot in ``run_dir``.

    Raises:
        CheckpointError: ``resume`` without a snapshot to resume from
    """
    if resume:
        path = latest_snapshot(run_dir)
        if path is None:
            raise CheckpointError(f"No snapshot to resume from in {run_dir}")
        logger.info(f"Resuming from {path}")
        trainer = Trainer.restore(path, config)
    else:
        trainer = Trainer(config)
    trainer.run(run_dir, source)
    return trainer
