"""
Application configuration module.

This module defines the Settings class, which is responsible for loading
service-level configuration from environment variables (including the .env
file). Per-run solver configuration lives in :mod:`app.schemas.run_config`.
"""

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables.

    Attributes:
        project_name: Human-readable name of the service.
        api_v1_prefix: URL prefix for all v1 API endpoints.
        output_dir: Directory under which run artifacts are written.
        log_level: Root logging level.
        threads: Worker threads for the preconditioner's block solves.
        seed: Seed for randomized studies and tests.
    """

    project_name: str = "Radiation Diffusion AMR Service"
    api_v1_prefix: str = "/api/v1"
    output_dir: str = "runs"
    log_level: str = "INFO"
    threads: int = Field(default=1, ge=1)
    seed: int = 0

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


@lru_cache
def get_settings() -> Settings:
    """Return cached application settings instance.

    The function is wrapped with :func:`functools.lru_cache` to avoid
    re-reading environment variables on every call.

    Returns:
        Settings: A singleton instance of application settings.
    """

    return Settings()
