"""
Configuration management for MLVGAN.

Process-wide settings come from the environment; per-run settings live in
the declarative documents of ``mlvgan.models.schemas``.
"""

from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application
    app_name: str = "MLVGAN - Multi-level Video GAN"
    app_version: str = "1.0.0"
    debug: bool = False
    log_level: str = "INFO"

    # Outputs
    output_root: str = "./runs"

    # Compute
    device: str = "cpu"

    # Data loading
    data_workers: int = 0  # 0 = load clips in the calling thread
    frame_cache_size: int = 256  # decoded clips kept in memory

    class Config:
        env_prefix = "MLVGAN_"
        env_file = ".env"
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
