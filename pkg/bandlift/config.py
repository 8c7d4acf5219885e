"""Configuration management for BandLift.

Runtime settings come from the environment (optionally a ``.env`` file). Experiment
settings come from a single YAML file validated into :class:`ExperimentConfig`.
"""

import logging
import os
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError as PydanticValidationError

from bandlift.errors import ValidationError
from bandlift.models import ExperimentConfig

logger = logging.getLogger(__name__)

PRESETS = ("full", "micro")


class Config:
    """Central runtime configuration for BandLift."""

    def __init__(self, env_file: Optional[Path] = None):
        """
        Initialize configuration with environment variables.

        Args:
            env_file: Optional path to .env file to load
        """
        if env_file and env_file.exists():
            load_dotenv(env_file)
        else:
            project_root = Path(__file__).parent.parent
            env_file = project_root / ".env"
            if env_file.exists():
                load_dotenv(env_file)

        self._load_configuration()

    def _load_configuration(self) -> None:
        """Load all configuration values from environment variables."""
        # Directory Configuration
        self.data_dir = Path(os.getenv("BANDLIFT_DATA_DIR", "./data"))
        self.runs_dir = Path(os.getenv("BANDLIFT_RUNS_DIR", "./runs"))
        self.cache_dir = Path(os.getenv("BANDLIFT_CACHE_DIR", "./data/cache"))
        self.exports_dir = Path(os.getenv("BANDLIFT_EXPORTS_DIR", "./data/exports"))

        # Cache Configuration
        self.cache_enabled = (
            os.getenv("BANDLIFT_CACHE_ENABLED", "true").lower() == "true"
        )
        self.cache_ttl = int(os.getenv("BANDLIFT_CACHE_TTL", str(7 * 24 * 3600)))

        # Compute
        self.device = os.getenv("BANDLIFT_DEVICE", "auto").lower()
        # unset: the experiment's train.num_workers decides
        workers = os.getenv("BANDLIFT_NUM_WORKERS", "").strip()
        self.num_workers: Optional[int] = int(workers) if workers else None
        self.eval_workers = int(os.getenv("BANDLIFT_EVAL_WORKERS", "1"))
        self.deterministic = (
            os.getenv("BANDLIFT_DETERMINISTIC", "true").lower() == "true"
        )

        # Export Configuration
        self.export_format_default = os.getenv("BANDLIFT_EXPORT_FORMAT", "csv")

        # Development/Debug
        self.debug_mode = os.getenv("DEBUG_MODE", "false").lower() == "true"
        self.log_level = os.getenv("LOG_LEVEL", "INFO").upper()

    def create_directories(self) -> None:
        """Create necessary directories if they don't exist."""
        for directory in [self.data_dir, self.runs_dir, self.cache_dir, self.exports_dir]:
            directory.mkdir(parents=True, exist_ok=True)

    def resolve_device(self) -> str:
        """
        Map the configured device to a torch device string.

        Returns:
            "cuda" or "cpu"
        """
        import torch

        if self.device == "auto":
            return "cuda" if torch.cuda.is_available() else "cpu"
        return self.device

    def validate_configuration(self) -> list[str]:
        """
        Validate configuration and return list of warnings.

        Returns:
            List of validation messages
        """
        warnings = []

        if self.device not in ("auto", "cpu", "cuda"):
            warnings.append(
                f"BANDLIFT_DEVICE ({self.device}) is not one of auto/cpu/cuda"
            )

        if self.num_workers and self.deterministic:
            warnings.append(
                "BANDLIFT_NUM_WORKERS > 0: bit-exact reproducibility is only "
                "guaranteed with in-process data loading"
            )

        if self.export_format_default not in ("csv", "json", "xlsx"):
            warnings.append(
                f"BANDLIFT_EXPORT_FORMAT ({self.export_format_default}) is not "
                "csv/json/xlsx - falling back to csv"
            )

        try:
            self.create_directories()
        except PermissionError:
            warnings.append("Cannot create required directories - check permissions")

        return warnings

    def to_dict(self) -> dict[str, Any]:
        """
        Convert configuration to dictionary for logging/debugging.

        Returns:
            Dictionary of configuration values
        """
        return {
            "data_dir": str(self.data_dir),
            "runs_dir": str(self.runs_dir),
            "cache_dir": str(self.cache_dir),
            "exports_dir": str(self.exports_dir),
            "cache_enabled": self.cache_enabled,
            "cache_ttl": self.cache_ttl,
            "device": self.device,
            "num_workers": self.num_workers,
            "eval_workers": self.eval_workers,
            "deterministic": self.deterministic,
            "export_format_default": self.export_format_default,
            "debug_mode": self.debug_mode,
            "log_level": self.log_level,
        }


# Global configuration instance
_config: Optional[Config] = None


def get_config() -> Config:
    """
    Get the global configuration instance.

    Returns:
        Config instance
    """
    global _config
    if _config is None:
        _config = Config()
    return _config


def initialize_config(env_file: Optional[Path] = None) -> Config:
    """
    Initialize the global configuration instance.

    Args:
        env_file: Optional path to .env file

    Returns:
        Config instance
    """
    global _config
    _config = Config(env_file)
    return _config


def reset_config() -> None:
    """Reset the global configuration instance (for testing)."""
    global _config
    _config = None


def experiment_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Validate a plain mapping into an ExperimentConfig."""
    try:
        return ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ValidationError(
            f"Invalid experiment config: {problems}",
            user_message=f"The experiment config is invalid ({problems})",
        ) from e


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    Load an experiment config from YAML.

    Relative manifest paths are resolved against the config file's directory.

    Args:
        path: YAML file

    Returns:
        Validated ExperimentConfig
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ValidationError(f"Cannot read experiment config {path}: {e}") from e

    manifest = data.get("data", {}).get("manifest")
    if manifest and not Path(manifest).is_absolute():
        data["data"]["manifest"] = str((Path(path).parent / manifest).resolve())

    config = experiment_from_dict(data)
    logger.info(f"Loaded experiment config '{config.name}' from {path}")
    return config


def load_preset(name: str) -> ExperimentConfig:
    """
    Load one of the shipped presets ("full" or "micro").

    Args:
        name: Preset name

    Returns:
        Validated ExperimentConfig
    """
    if name not in PRESETS:
        raise ValidationError(f"Unknown preset '{name}', expected one of {PRESETS}")
    text = resources.files("bandlift.configs").joinpath(f"{name}.yaml").read_text("utf-8")
    return experiment_from_dict(yaml.safe_load(text))


def save_experiment_config(config: ExperimentConfig, path: Path) -> Path:
    """
    Write the fully resolved config as YAML.

    Args:
        config: Experiment config
        path: Output file

    Returns:
        Path written
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.model_dump(mode="json"), f, sort_keys=False)
    return path
