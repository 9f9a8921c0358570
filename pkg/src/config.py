"""Configuration management for qcert.

Numerical defaults live in a JSON file in the OS-specific config
directory. Library functions take explicit keyword arguments; the CLI
loads this file and passes the values along.
"""

import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any


@dataclass
class Config:
    """Numerical settings shared by the CLI commands."""

    density_cutoff: float = 1e6
    ui_tolerance: float = 1e-9
    n_power: int = 32
    oracle_max_states: int = 1000
    neumann_max_iter: int = 50_000
    neumann_tol: float = 1e-13
    neumann_damping: float = 1.0
    bisection_steps: int = 60
    enumeration_limit: int = 20_000_000
    kappa_margin: float = 0.01
    n_burn: int = 10
    rho_margin: float = 0.01
    n_cap: int = 64

    def __post_init__(self) -> None:
        validate_config(self)

    @classmethod
    def default(cls) -> "Config":
        """Create default configuration."""
        return cls()

    def to_dict(self) -> dict:
        """Convert config to dictionary for JSON serialization."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        """Create config from dictionary; missing keys take their defaults.

        Raises:
            ValueError: On unknown keys or values of the wrong type.
        """
        known = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(known)
        if unknown:
            raise ValueError(f"Unknown config keys: {', '.join(sorted(unknown))}")
        values = {name: coerce_value(name, value) for name, value in data.items()}
        return cls(**values)


def coerce_value(key: str, value: Any) -> Any:
    """Convert a raw value (JSON or command-line string) to the field's type.

    Raises:
        ValueError: If the key is unknown or the value does not parse.
    """
    types = {f.name: f.type for f in fields(Config)}
    if key not in types:
        valid = ", ".join(sorted(types))
        raise ValueError(f"Unknown config key: {key}\nValid keys: {valid}")
    kind = types[key]
    try:
        if kind in (int, "int"):
            if isinstance(value, str):
                return int(float(value)) if "e" in value.lower() else int(value)
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ValueError(f"Invalid value for {key}: {value!r}")


def validate_config(config: Config) -> None:
    """Check ranges of every field.

    Raises:
        ValueError: Naming the offending field.
    """
    positive = [
        "density_cutoff",
        "ui_tolerance",
        "n_power",
        "oracle_max_states",
        "neumann_max_iter",
        "neumann_tol",
        "bisection_steps",
        "enumeration_limit",
        "n_cap",
    ]
    for name in positive:
        if not getattr(config, name) > 0:
            raise ValueError(f"Invalid {name}: {getattr(config, name)!r}\nMust be > 0")
    if not 0.0 < config.neumann_damping <= 1.0:
        raise ValueError(
            f"Invalid neumann_damping: {config.neumann_damping!r}\nMust lie in (0, 1]"
        )
    if not 0.0 < config.kappa_margin < 1.0 or not 0.0 < config.rho_margin < 1.0:
        raise ValueError("kappa_margin and rho_margin must lie in (0, 1)")
    if config.n_burn < 0:
        raise ValueError(f"Invalid n_burn: {config.n_burn}\nMust be >= 0")


def _get_app_dir() -> Path:
    """Get OS-specific config directory for qcert."""
    if os.name == "nt":  # Windows
        base = Path(os.environ.get("APPDATA", "~")).expanduser()
    else:  # Linux/macOS
        base = Path.home() / ".config"

    app_dir = base / "qcert"
    app_dir.mkdir(parents=True, exist_ok=True)
    return app_dir


def get_config_dir() -> Path:
    """Get OS-specific configuration directory.

    Returns:
        OS-specific directory path for configuration files
    """
    return _get_app_dir()


def get_config_file() -> Path:
    """Get path to configuration file.

    Returns:
        Path to config.json file
    """
    return get_config_dir() / "config.json"


def load_config() -> Config:
    """Load configuration from file or create default.

    Returns:
        Config object with user preferences or defaults.
    """
    config_file = get_config_file()

    if config_file.exists():
        try:
            with open(config_file, "r") as f:
                return Config.from_dict(json.load(f))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError):
            # If config is corrupted, fall back to default
            return Config.default()

    return Config.default()


def save_config(config: Config) -> None:
    """Save configuration to file.

    Args:
        config: Config object to save.
    """
    config_file = get_config_file()
    with open(config_file, "w") as f:
        json.dump(config.to_dict(), f, indent=2)


def set_value(key: str, value: str) -> Config:
    """Update one key in the stored configuration.

    Raises:
        ValueError: If the key is unknown or the value is invalid.
    """
    data = load_config().to_dict()
    data[key] = coerce_value(key, value)
    config = Config.from_dict(data)
    save_config(config)
    return config


def reset_config() -> Config:
    """Reset configuration to defaults.

    Returns:
        Default Config object.
    """
    config = Config.default()
    save_config(config)
    return config
