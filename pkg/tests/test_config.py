"""Tests for config module."""

import json
import tempfile
from pathlib import Path

import pytest

from src import config


def test_get_config_dir():
    """Test that config directory is created."""
    config_dir = config.get_config_dir()
    assert config_dir.exists()
    assert config_dir.is_dir()
    assert config_dir.name == "qcert"


def test_config_default():
    """Test default configuration."""
    cfg = config.Config.default()
    assert cfg.density_cutoff == 1e6
    assert cfg.n_power == 32
    assert cfg.oracle_max_states == 1000
    assert cfg.kappa_margin == 0.01


def test_config_to_from_dict():
    """Test config serialization."""
    original = config.Config(n_power=16, neumann_damping=0.5)

    data = original.to_dict()
    restored = config.Config.from_dict(data)

    assert restored == original


def test_from_dict_partial_and_unknown():
    cfg = config.Config.from_dict({"n_cap": 8})
    assert cfg.n_cap == 8
    assert cfg.n_power == 32

    with pytest.raises(ValueError, match="Unknown config keys: db_path"):
        config.Config.from_dict({"db_path": "/tmp/x.db"})


def test_coerce_value():
    assert config.coerce_value("n_power", "64") == 64
    assert config.coerce_value("n_power", "1e3") == 1000
    assert config.coerce_value("ui_tolerance", "1e-12") == 1e-12
    with pytest.raises(ValueError, match="Invalid value for n_power"):
        config.coerce_value("n_power", "many")
    with pytest.raises(ValueError, match="Invalid value for n_cap"):
        config.coerce_value("n_cap", 2.5)
    with pytest.raises(ValueError, match="Valid keys"):
        config.coerce_value("nope", "1")


@pytest.mark.parametrize(
    "field,value",
    [
        ("n_power", 0),
        ("density_cutoff", -1.0),
        ("neumann_damping", 1.5),
        ("kappa_margin", 1.0),
        ("n_burn", -1),
    ],
)
def test_validate_config(field, value):
    with pytest.raises(ValueError, match=field):
        config.Config(**{field: value})


def test_save_and_load_config():
    """Test saving and loading configuration."""
    with tempfile.TemporaryDirectory() as tmpdir:
        # Override config directory for test
        original_get_config_file = config.get_config_file
        test_config_file = Path(tmpdir) / "config.json"

        def mock_get_config_file():
            return test_config_file

        config.get_config_file = mock_get_config_file

        try:
            test_config = config.Config(n_power=8, rho_margin=0.05)
            config.save_config(test_config)

            loaded = config.load_config()

            assert loaded == test_config
            assert json.loads(test_config_file.read_text())["n_power"] == 8
        finally:
            # Restore original function
            config.get_config_file = original_get_config_file


def test_load_config_missing_file():
    """Test loading config when file doesn't exist."""
    with tempfile.TemporaryDirectory() as tmpdir:
        original_get_config_file = config.get_config_file
        test_config_file = Path(tmpdir) / "nonexistent.json"

        def mock_get_config_file():
            return test_config_file

        config.get_config_file = mock_get_config_file

        try:
            cfg = config.load_config()
            assert cfg == config.Config.default()
        finally:
            config.get_config_file = original_get_config_file


def test_load_config_corrupted_file():
    """Test loading config when file is corrupted."""
    with tempfile.TemporaryDirectory() as tmpdir:
        original_get_config_file = config.get_config_file
        test_config_file = Path(tmpdir) / "config.json"

        def mock_get_config_file():
            return test_config_file

        config.get_config_file = mock_get_config_file

        try:
            with open(test_config_file, "w") as f:
                f.write("{invalid json")
            assert config.load_config() == config.Config.default()

            # Out-of-range values fall back too
            test_config_file.write_text(json.dumps({"n_power": -3}))
            assert config.load_config() == config.Config.default()
        finally:
            config.get_config_file = original_get_config_file


def test_set_value():
    with tempfile.TemporaryDirectory() as tmpdir:
        original_get_config_file = config.get_config_file
        test_config_file = Path(tmpdir) / "config.json"
        config.get_config_file = lambda: test_config_file

        try:
            cfg = config.set_value("bisection_steps", "80")
            assert cfg.bisection_steps == 80
            assert config.load_config().bisection_steps == 80

            with pytest.raises(ValueError, match="neumann_damping"):
                config.set_value("neumann_damping", "0")
            assert config.load_config().neumann_damping == 1.0
        finally:
            config.get_config_file = original_get_config_file


def test_reset_config():
    """Test resetting configuration to defaults."""
    with tempfile.TemporaryDirectory() as tmpdir:
        original_get_config_file = config.get_config_file
        original_save_config = config.save_config
        test_config_file = Path(tmpdir) / "config.json"

        def mock_get_config_file():
            return test_config_file

        saved_config = None

        def mock_save_config(cfg):
            nonlocal saved_config
            saved_config = cfg
            original_save_config(cfg)

        config.get_config_file = mock_get_config_file
        config.save_config = mock_save_config

        try:
            config.save_config(config.Config(n_power=4))

            default_cfg = config.reset_config()

            assert default_cfg == config.Config.default()
            assert saved_config == default_cfg
            assert config.load_config().n_power == 32
        finally:
            config.get_config_file = original_get_config_file
            config.save_config = original_save_config
