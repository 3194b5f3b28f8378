"""
Configuration module
Loads, validates and serves tolerances, solver settings and runtime options
"""

import copy
import logging
import os
from typing import Any, Dict, Optional

import yaml

from .utils.error_utils import ConfigError

logger = logging.getLogger(__name__)

# Gates that may be tightened to zero to force a deliberate failure
ZERO_ALLOWED = {"residual_gate", "gate_factor", "compatibility_factor"}

# Environment variables that bypass the PREFIX_SECTION_KEY layout
ENV_ALIASES = {
    "BONNET_THREADS": "runtime.threads",
    "BONNET_SEED": "runtime.seed",
}


class Config:
    """
    Configuration manager

    Values come from DEFAULT_CONFIG, then an optional YAML file, then
    environment variables of the form BONNET_SECTION_KEY=value.
    """

    DEFAULT_CONFIG = {
        "tolerances": {
            "residual_gate": 1e-8,
            "gate_factor": 20.0,
            "compatibility_factor": 10.0,
            "spectral": 1e-5,
            "orthonormality_drift": 1e-3,
            "principal_net": 1e-4,
            "unit_sphere": 1e-8,
            "normal": 1e-6,
            "minimality": 1e-4,
            "separability": 1e-3,
            "conformality": 1e-3,
            "interpolation": 1e-8,
        },
        "solver": {
            "tol": 1e-8,
            "max_iters": 20,
            "armijo": 1e-4,
            "min_step": 2.0 ** -20,
        },
        "spectrum": {
            "fd_step": 1e-3,
            "rank_tol": 1e-8,
        },
        "family": {
            "angles": 8,
            "disc_radius": None,
        },
        "export": {
            "projection": "stereographic",
            "pole": [0.0, 0.0, 0.0, -1.0],
            "precision": 10,
        },
        "runtime": {
            "threads": 1,
            "seed": 0,
        },
        "logging": {
            "level": "INFO",
            "file": None,
        },
    }

    def __init__(self, config_path: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None,
                 use_env: bool = True):
        """
        Initialize the configuration manager

        Args:
            config_path: Optional YAML file path
            overrides: Optional nested dictionary applied after the file
            use_env: Whether to read BONNET_* environment variables
        """
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)

        if config_path:
            self._load_from_file(config_path)

        if overrides:
            self._merge_config(self.config, overrides)

        if use_env:
            self._load_from_env()

        self._validate_config()

        logger.debug(f"Configuration loaded: {len(self.config)} sections")

    def _load_from_file(self, config_path: str) -> None:
        """
        Load configuration from a YAML file

        Args:
            config_path: Configuration file path

        Raises:
            ConfigError: If the file is missing or not a mapping
        """
        if not os.path.exists(config_path):
            raise ConfigError(f"Config file not found: {config_path}", {"path": config_path})
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                file_config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Failed to parse config file: {str(e)}", {"path": config_path})
        if file_config is None:
            return
        if not isinstance(file_config, dict):
            raise ConfigError("Config file must contain a mapping", {"path": config_path})
        self._merge_config(self.config, file_config)
        logger.info(f"Loaded configuration from file: {config_path}")

    def _coerce(self, current: Any, value: str) -> Any:
        if isinstance(current, bool):
            return value.lower() in ("true", "yes", "1")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            return [float(x) for x in value.split(",")]
        if current is None:
            try:
                return float(value)
            except ValueError:
                return value
        return value

    def _load_from_env(self) -> None:
        """
        Load configuration from environment variables
        Format: BONNET_SECTION_KEY=value
        """
        prefix = "BONNET_"
        for key, value in sorted(os.environ.items()):
            if not key.startswith(prefix):
                continue
            if key in ENV_ALIASES:
                key_path = ENV_ALIASES[key]
            else:
                parts = key[len(prefix):].lower().split("_", 1)
                if len(parts) != 2 or parts[0] not in self.config:
                    continue
                if parts[1] not in self.config[parts[0]]:
                    continue
                key_path = f"{parts[0]}.{parts[1]}"
            try:
                self.set(key_path, self._coerce(self.get(key_path), value))
            except ValueError:
                raise ConfigError(f"Invalid value for {key}: {value}", {"variable": key})
            logger.debug(f"Loaded configuration from environment: {key}={value}")

    def _merge_config(self, target: Dict[str, Any], source: Dict[str, Any]) -> None:
        """
        Recursively merge configuration dictionaries

        Args:
            target: Target configuration dictionary
            source: Source configuration dictionary
        """
        for key, value in source.items():
            if key in target and isinstance(target[key], dict) and isinstance(value, dict):
                self._merge_config(target[key], value)
            else:
                target[key] = value

    def _validate_config(self) -> None:
        """
        Validate tolerances, solver settings and runtime options

        Raises:
            ConfigError: On the first invalid value
        """
        for name, value in self.config["tolerances"].items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"Tolerance {name} must be a number", {"key": name})
            if name in ZERO_ALLOWED:
                if value < 0:
                    raise ConfigError(f"Gate {name} must be >= 0", {"key": name, "value": value})
            elif value <= 0:
                raise ConfigError(f"Tolerance {name} must be > 0", {"key": name, "value": value})

        if self.get("solver.tol") <= 0:
            raise ConfigError("solver.tol must be > 0", {"value": self.get("solver.tol")})
        if int(self.get("solver.max_iters")) < 1:
            raise ConfigError("solver.max_iters must be >= 1")
        if not 0 < self.get("solver.min_step") <= 1:
            raise ConfigError("solver.min_step must lie in (0, 1]")
        if self.get("spectrum.fd_step") <= 0:
            raise ConfigError("spectrum.fd_step must be > 0")
        if int(self.get("family.angles")) < 1:
            raise ConfigError("family.angles must be >= 1")
        if int(self.get("runtime.threads")) < 1:
            raise ConfigError("runtime.threads must be >= 1")
        if self.get("export.projection") not in ("stereographic", "drop-coordinate"):
            raise ConfigError(f"Unknown projection: {self.get('export.projection')}")
        if len(self.get("export.pole")) != 4:
            raise ConfigError("export.pole must have four components")

    def get(self, key_path: str, default: Any = None) -> Any:
        """
        Get a configuration value

        Args:
            key_path: Dotted key path, e.g. "tolerances.spectral"
            default: Returned if the key is absent

        Returns:
            Configuration value or default
        """
        config = self.config
        for part in key_path.split("."):
            if isinstance(config, dict) and part in config:
                config = config[part]
            else:
                return default
        return config

    def set(self, key_path: str, value: Any) -> None:
        """
        Set a configuration value

        Args:
            key_path: Dotted key path
            value: Value to set
        """
        parts = key_path.split(".")
        config = self.config
        for part in parts[:-1]:
            if part not in config:
                config[part] = {}
            config = config[part]
        config[parts[-1]] = value

    def tolerances(self) -> Dict[str, float]:
        """Return a copy of the tolerance section"""
        return dict(self.config["tolerances"])

    def save_to_file(self, file_path: str) -> bool:
        """
        Save the current configuration to a YAML file

        Args:
            file_path: Output path

        Returns:
            Whether the save succeeded
        """
        try:
            with open(file_path, "w", encoding="utf-8") as f:
                yaml.safe_dump(self.config, f, default_flow_style=False, sort_keys=True)
            return True
        except Exception as e:
            logger.error(f"Failed to save config file: {str(e)}")
            return False
