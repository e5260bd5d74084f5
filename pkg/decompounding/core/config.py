"""Configuration management for the decompounding toolkit."""

from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from models.schemas import Interval, TuneOn

load_dotenv()


class Settings(BaseSettings):
    """Toolkit defaults loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        populate_by_name=True,
    )

    # App settings
    app_name: str = "Decompounding Toolkit"
    log_level: str = Field(default="INFO", alias="DECOMPOUND_LOG_LEVEL")

    # Wavelet estimator
    wavelet: str = Field(default="sym4", alias="DECOMPOUND_WAVELET")
    kappa: float = Field(default=1.0, gt=0, alias="DECOMPOUND_KAPPA")
    level_L: int = Field(default=8, ge=1, le=16, alias="DECOMPOUND_LEVEL_L")
    resolution_J: int = Field(default=10, ge=0, alias="DECOMPOUND_RESOLUTION_J")
    tune_on: TuneOn = Field(default=TuneOn.N_T, alias="DECOMPOUND_TUNE_ON")

    # Estimation grid
    grid_step: float = Field(default=0.01, gt=0, alias="DECOMPOUND_GRID_STEP")
    domain_lo: float = Field(default=-6.0, alias="DECOMPOUND_DOMAIN_LO")
    domain_hi: float = Field(default=6.0, alias="DECOMPOUND_DOMAIN_HI")

    # Monte Carlo runs
    threads: int = Field(default=1, ge=1, alias="DECOMPOUND_THREADS")
    output_dir: str = Field(default="results", alias="DECOMPOUND_OUTPUT_DIR")

    @property
    def domain(self) -> Interval:
        """Default estimation domain D."""
        return Interval(lo=self.domain_lo, hi=self.domain_hi)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Convenience instance for quick access
settings = get_settings()
