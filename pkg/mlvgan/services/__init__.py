"""
MLVGAN services - subsampling, data, training, checkpoints, metrics,
evaluation and the cost model.

Modules are imported directly (``from mlvgan.services.training import
Trainer``); the generator depends on ``subsampling``, so this package
does not import its modules eagerly.
"""

__all__ = [
    "checkpoint",
    "costmodel",
    "data",
    "evaluation",
    "metrics",
    "subsampling",
    "training",
]
