"""
Tests for configuration error handling scenarios
"""

import os
import sys
from pathlib import Path
from unittest.mock import patch

import pytest

from hsconfig import Config
from hserrors import ConfigError
from hsoptions import parse_options


class TestConfigErrors:
    """Test configuration error handling scenarios"""

    def test_config_missing_file(self, temp_dir):
        """Test a missing config file"""
        with pytest.raises(ConfigError, match="configuration file not found"):
            Config(str(Path(temp_dir) / "nonexistent.toml"))

    def test_config_invalid_toml_file(self, temp_dir):
        """Test an invalid TOML config file"""
        path = Path(temp_dir) / "invalid_config.toml"
        path.write_text("invalid toml content [[[")
        with pytest.raises(ConfigError, match="Invalid TOML syntax"):
            Config(str(path))

    def test_config_value_where_section_expected(self, temp_dir):
        """Test a value where a section is expected"""
        path = Path(temp_dir) / "flat.toml"
        path.write_text('model = "lasso"\n')
        with pytest.raises(ConfigError, match="'model' must be a section"):
            Config(str(path))

    def test_config_nested_value_where_section_expected(self, temp_dir):
        """Test a nested value where a section is expected"""
        path = Path(temp_dir) / "nested.toml"
        path.write_text(
            '[data]\ninput = 3\n[model]\nstrategy = "refit"\n[output]\ndirectory = 1\n'
        )
        # scalar keys accept any type at load time; the options layer validates them
        config = Config(str(path))
        assert config.get("output.directory") == 1

    @pytest.mark.skipif(sys.platform == "win32", reason="POSIX permissions")
    def test_config_unreadable_file(self, temp_dir):
        """Test an unreadable config file"""
        if hasattr(os, "geteuid") and os.geteuid() == 0:
            pytest.skip("root ignores file permissions")
        path = Path(temp_dir) / "locked.toml"
        path.write_text("logLevel = 10\n")
        path.chmod(0o000)
        try:
            with pytest.raises(ConfigError, match="Permission denied"):
                Config(str(path))
        finally:
            path.chmod(0o644)

    def test_config_os_error(self, temp_dir):
        """Test an operating system error while reading the config"""
        path = Path(temp_dir) / "config.toml"
        path.write_text("logLevel = 10\n")
        with patch("hsconfig.Path.open", side_effect=OSError("disk gone")):
            with pytest.raises(ConfigError, match="disk gone"):
                Config(str(path))

    def test_directory_as_config(self, temp_dir):
        """Test a directory given as the config file"""
        with pytest.raises(ConfigError):
            Config(temp_dir)


class TestOptionErrorsFromFile:
    """Errors in values that parse as TOML but not as settings"""

    def write(self, temp_dir, study_config, old, new):
        path = Path(temp_dir) / "edited.toml"
        text = study_config.read_text()
        assert old in text
        path.write_text(text.replace(old, new))
        return path

    @pytest.mark.parametrize(
        ("old", "new", "match"),
        [
            ('sigma = "naive"', 'sigma = "exact"', "sigma"),
            ("gridSize = 5", "gridSize = 2.5", "gridSize"),
            ("rho1 = [-0.2, 0.2]", "rho1 = [0.2]", "rho1"),
            ("rho0 = [-0.1, 0.1]", "rho0 = [-1.0, 0.1]", "Rho range"),
            ('numeric = ["age", "visits"]', "numeric = 3", "data.numeric"),
            ('targets = ["ate"', 'targets = ["att"', "Unknown target"),
            ("seed = 11", "seed = true", "output.seed"),
        ],
    )
    def test_invalid_setting(self, temp_dir, study_config, old, new, match):
        """Test an invalid setting value"""
        path = self.write(temp_dir, study_config, old, new)
        with pytest.raises(ConfigError, match=match):
            parse_options(["estimate", "-c", str(path)])

    def test_invalid_log_level(self, temp_dir, study_config):
        """Test an invalid log level"""
        path = self.write(temp_dir, study_config, "logLevel = 10", 'logLevel = "loud"')
        with pytest.raises(ConfigError, match="logLevel"):
            parse_options(["estimate", "-c", str(path)])

    def test_empty_targets(self, temp_dir, study_config):
        """Test an empty target list"""
        path = self.write(
            temp_dir,
            study_config,
            'targets = ["ate", "mean_y1_given_t0", "mean_y0_given_t1"]',
            "targets = []",
        )
        with pytest.raises(ConfigError, match="At least one target"):
            parse_options(["estimate", "-c", str(path)])
