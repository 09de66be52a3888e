"""
Error types raised by MLVGAN.

Every error carries the process exit code the command line reports for it.
"""

from typing import Optional


class MlvganError(Exception):
    """Base class for all MLVGAN errors."""

    exit_code = 3


class ConfigError(MlvganError):
    """Invalid run document, preset or configuration combination."""

    exit_code = 2


class ShapeError(MlvganError, ValueError):
    """Tensor shape does not match the contract of an operation."""

    exit_code = 2


class LabelError(MlvganError, ValueError):
    """Label given to an unconditional model, or label out of range."""

    exit_code = 2


class ClipError(MlvganError):
    """A video clip is too short or cannot be decoded."""

    exit_code = 2


class CheckpointError(MlvganError):
    """Checkpoint is missing, corrupt, of another version or another model."""

    exit_code = 2


class EvaluationError(MlvganError):
    """Evaluation cannot run (missing embedder, empty run directory)."""

    exit_code = 2


class InfeasibleBudgetError(MlvganError):
    """No schedule fits the requested memory budget."""

    exit_code = 2


class DivergenceError(MlvganError):
    """Training produced a non-finite loss."""

    exit_code = 3

    def __init__(self, message: str, logit_means: Optional[dict] = None):
        super().__init__(message)
        self.logit_means = logit_means or {}


class GradientPathError(MlvganError):
    """A discriminator output is not differentiable with respect to its input."""

    exit_code = 3
