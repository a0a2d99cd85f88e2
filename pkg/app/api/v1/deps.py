from pathlib import Path

from fastapi import Depends

from app.core.config import Settings, get_settings


def get_app_settings() -> Settings:
    """FastAPI dependency that returns the cached application settings.

    Returns:
        Settings: Settings shared by every request.
    """

    return get_settings()


def get_output_root(settings: Settings = Depends(get_app_settings)) -> Path:
    """Dependency provider for the directory that receives run artifacts.

    Args:
        settings: Application settings provided by FastAPI.

    Returns:
        Path: Root directory under which each run gets its own folder.
    """

    return Path(settings.output_dir)
