"""
Infrastructure Layer - Configuration

Environment variables and settings.
"""

from pathlib import Path

import torch
from pydantic import Field
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Process-wide settings loaded from ``KGBRIDGE_*`` environment variables."""

    # Paths
    data_dir: Path = Field(
        default=Path("./data"), description="Default location of input corpora"
    )
    output_dir: Path = Field(
        default=Path("./runs"), description="Default root for run artifacts"
    )

    # Logging
    log_level: str = Field(default="INFO", description="Root log level")

    # Reproducibility
    torch_num_threads: int = Field(
        default=1, ge=1, description="Intra-op CPU threads; 1 keeps reductions reproducible"
    )
    deterministic_algorithms: bool = Field(
        default=True, description="Call torch.use_deterministic_algorithms"
    )

    # Reports
    float_format: str = Field(default="%.6f", description="CSV float format")

    model_config = {
        "env_prefix": "KGBRIDGE_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "extra": "ignore",
    }

    def apply_torch_settings(self) -> None:
        """Pin thread count and determinism before any training."""
        torch.set_num_threads(self.torch_num_threads)
        torch.use_deterministic_algorithms(self.deterministic_algorithms)


# Global settings instance
settings = Settings()
