__all__ = ["Config", "hsconfig", "initialize_config", "load_scenario_file"]

import copy
from pathlib import Path

from hserrors import ConfigError

try:
    import tomllib  # Python 3.11+
except ModuleNotFoundError:
    import tomli as tomllib  # type: ignore[no-redef]

DEFAULTS = {
    "logLevel": 20,
    "data": {
        "input": "",
        "treatment": "",
        "outcome": "",
        "numeric": [],
        "categorical": [],
        "binary": [],
    },
    "expansion": {
        "degree": 1,
        "interactions": 1,
        "powerInteractions": [],
    },
    "model": {
        "strategy": "refit",
        "outcomePenalty": "auto",
        "propensityPenalty": "auto",
        "cvFolds": 10,
        "plugInConstant": 1.1,
        "trimFloor": 0.01,
    },
    "sensitivity": {
        "rho1": [0.0, 0.0],
        "rho0": [0.0, 0.0],
        "gridSize": 101,
        "sigma": "corrected",
        "alpha": 0.05,
        "targets": ["ate"],
    },
    "bounds": {
        "step": 0.01,
        "limit": 0.99,
        "sigma": "corrected",
    },
    "output": {
        "directory": "",
        "seed": 20230501,
    },
}


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}{key}"
        if isinstance(base.get(key), dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Configuration key '{where}' must be a section")
            _merge(base[key], value, f"{where}.")
        else:
            base[key] = value


def _read_toml(file_path, what):
    try:
        with Path(file_path).open("rb") as config_file:
            return tomllib.load(config_file)
    except FileNotFoundError as e:
        raise ConfigError(f"{what} not found: {file_path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML syntax in {what} {file_path}: {e}") from e
    except PermissionError as e:
        raise ConfigError(f"Permission denied reading {what}: {file_path}") from e
    except OSError as e:
        raise ConfigError(f"Failed to read {what} {file_path}: {e}") from e


class Config:
    def __init__(self, custom_config_path=None):
        self.config = copy.deepcopy(DEFAULTS)
        self.config_file_path = custom_config_path
        self.file_config = {}

        # Without an explicit file the defaults stand alone; paths are never discovered
        if custom_config_path:
            self.file_config = _read_toml(custom_config_path, "configuration file")
            _merge(self.config, self.file_config)

    def get(self, key, default=None):
        """Look up `key`, where dotted keys address sections ("model.trimFloor")."""
        node = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def loaded(self, key):
        """True when `key` came from the configuration file rather than defaults."""
        node = self.file_config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return False
            node = node[part]
        return True


def load_scenario_file(file_path):
    """Read a simulation scenario file into a plain dictionary."""
    return _read_toml(file_path, "scenario file")


# Default global config instance - will be replaced if a config file is provided
hsconfig = None


def initialize_config(custom_config_path=None):
    """Initialize the global config instance with optional custom config path."""
    global hsconfig
    hsconfig = Config(custom_config_path)
    return hsconfig


hsconfig = initialize_config()
