"""
MLVGAN - Multi-level video GAN

Memory-efficient video GAN training with stacked sub-generators, stochastic
frame-subsampling layers and per-level discriminators, plus an analytic
cost/memory model.
"""

__version__ = "1.0.0"
