# src/utils/resource_path.py
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DEFAULT_CONFIG_NAME = "experiment.yaml"


def get_resource_path(relative_path: str) -> Path:
    """ Get absolute path to resource, works for dev and for PyInstaller bundle. """
    try:
        # PyInstaller creates a temp folder and stores path in _MEIPASS
        base_path = Path(sys._MEIPASS)
    except Exception:
        # Not running in a bundle, assume running from source
        # Go up levels from this file (src/utils/resource_path.py) to project root
        base_path = Path(__file__).resolve().parent.parent.parent

    return base_path / relative_path


def default_config_path() -> Path:
    """Experiment config path: HLAS_CONFIG if set, else config/experiment.yaml."""
    override = os.getenv("HLAS_CONFIG")
    if override:
        return Path(override).expanduser().resolve()
    return get_resource_path(f"config/{DEFAULT_CONFIG_NAME}")


def resolve_config_relative(path_str: str, config_path: Path) -> Path:
    """Resolves a path written inside a config file relative to that file's directory."""
    candidate = Path(path_str).expanduser()
    if candidate.is_absolute():
        return candidate
    return (config_path.parent / candidate).resolve()
