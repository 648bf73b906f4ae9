"""
Configuration management for the hash simplification engine.
Loads settings from environment variables (prefix HASHSIMP_) with sensible defaults.
"""
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application
    app_name: str = Field(default="hashsimp")
    app_version: str = Field(default="1.0.0")
    log_level: str = Field(default="INFO")

    # Experiment harness
    threads: Optional[int] = Field(default=1, ge=1, description="Maximum concurrent runs")
    out_dir: str = Field(default="results")

    model_config = SettingsConfigDict(
        env_prefix="HASHSIMP_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
settings = Settings()
