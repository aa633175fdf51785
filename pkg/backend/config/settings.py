import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict

PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent


class Settings(BaseSettings):
    # Environment-based configuration loading
    @property
    def env_file_path(self) -> str:
        """Get environment-specific .env file path."""
        env = os.getenv("HEMGEN_ENVIRONMENT", "development")
        env_file_map = {
            "development": ".env",
            "ci": ".env.ci",
        }
        env_file = env_file_map.get(env, ".env")
        return str(PROJECT_ROOT / env_file)

    model_config = SettingsConfigDict(
        env_prefix="HEMGEN_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Environment
    ENVIRONMENT: str = Field(default="development")

    # Logging
    LOG_LEVEL: str = Field(default="INFO")
    LOG_TO_FILE: bool = Field(default=False)  # daily log file in LOG_DIR
    LOG_DIR: str = Field(default="logs")

    # Data locations
    DATA_DIR: str = Field(default=str(PROJECT_ROOT / "data"))
    RUNS_DIR: str = Field(default="runs")
    DATASET_PATH: Optional[str] = Field(
        default=None, description="Full energetic-compound dataset CSV, if available"
    )

    # Reproducibility
    DEFAULT_SEED: int = Field(default=20250101)

    # Numerical guards
    GRAD_CLIP_NORM: float = Field(default=5.0, gt=0.0, description="Global-norm clip for generator gradients")
    JACOBI_MAX_SWEEPS: int = Field(default=100)
    CANONICAL_TIE_BUDGET: int = Field(
        default=64, description="Leaf budget for tie-breaking during canonicalization"
    )

    @computed_field
    @property
    def FIXTURES_DIR(self) -> str:
        return str(Path(self.DATA_DIR) / "fixtures")


# Initialize settings, then let an environment-specific .env override defaults
settings = Settings()

load_dotenv(settings.env_file_path, override=False)

settings = Settings()
