"""
Configuration settings for the cryomos toolkit.

Create a .env file in the repository root to override any of the defaults:
# Reproducibility
DEFAULT_SEED=20240601

# Fitting
FIT_ERROR_THRESHOLD=0.06

# Output
OUTPUT_DIR=./out
FLOAT_SIG_DIGITS=9

# Reference parameter library (defaults to the bundled app/data/reference)
REFERENCE_LIBRARY_DIR=

# Batch processing
MAX_WORKERS=4

# Logging
LOG_LEVEL=INFO
"""

from pathlib import Path
from typing import Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

_APP_DIR = Path(__file__).resolve().parent.parent
_ROOT_DIR = _APP_DIR.parent


class Settings(BaseSettings):
    """Toolkit settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=str(_ROOT_DIR / ".env"),
        case_sensitive=True,
        # Allow extra fields for forward compatibility
        extra="ignore",
    )

    # Reproducibility
    DEFAULT_SEED: int = 20240601

    # Fitting
    FIT_ERROR_THRESHOLD: float = Field(
        default=0.06,
        description="Mean relative error below which a calibration counts as accepted.",
    )
    FIT_MAX_ITERATIONS: int = 5000
    FIT_RESTARTS: int = 3

    # Output
    OUTPUT_DIR: str = "./out"
    FLOAT_SIG_DIGITS: int = 9

    # Reference library
    REFERENCE_LIBRARY_DIR: Optional[str] = None
    BENCH_CONFIG_PATH: Optional[str] = None

    # Batch processing
    MAX_WORKERS: int = 4

    # Logging
    LOG_LEVEL: str = "INFO"

    @field_validator("MAX_WORKERS", "FIT_MAX_ITERATIONS", "FIT_RESTARTS")
    @classmethod
    def validate_positive(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("must be a positive integer")
        return v

    @field_validator("FIT_ERROR_THRESHOLD")
    @classmethod
    def validate_threshold(cls, v: float) -> float:
        if not 0.0 <= v <= 1.0:
            raise ValueError("FIT_ERROR_THRESHOLD must lie in [0, 1]")
        return v

    @field_validator("FLOAT_SIG_DIGITS")
    @classmethod
    def validate_digits(cls, v: int) -> int:
        if not 6 <= v <= 17:
            raise ValueError("FLOAT_SIG_DIGITS must lie in [6, 17]")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown LOG_LEVEL: {v}")
        return level

    @property
    def reference_library_dir(self) -> Path:
        """Directory holding the versioned reference parameter files."""
        if self.REFERENCE_LIBRARY_DIR:
            return Path(self.REFERENCE_LIBRARY_DIR)
        return _APP_DIR / "data" / "reference"

    @property
    def bench_config_path(self) -> Path:
        """Default benchmark scenario file."""
        if self.BENCH_CONFIG_PATH:
            return Path(self.BENCH_CONFIG_PATH)
        return _APP_DIR / "data" / "bench.conf"


# Create settings instance
try:
    settings = Settings()
except Exception as e:
    print(f"Error loading configuration: {e}")
    print("Please check your .env file or environment variables.")
    raise
