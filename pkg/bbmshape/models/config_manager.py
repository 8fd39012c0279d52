"""
Experiment configuration and JSON persistence
"""

import copy
import dataclasses
import json
import logging
from pathlib import Path
from typing import Any

from bbmshape.constants import SimulationConstants, TiltedConstants
from bbmshape.exceptions import (
    ConfigLoadError,
    ConfigSaveError,
    ConfigValidationError,
    FieldError,
)
from bbmshape.models.field import PeriodicField, field_from_dict

logger = logging.getLogger(__name__)

SUBCOMMAND_BLOCKS = (
    "eigen",
    "speed",
    "rate",
    "wulff",
    "simulate",
    "halfspace",
    "shape",
    "tilted",
    "fkpp",
    "mckean",
    "verify_all",
)

# keys whose values must be strictly positive wherever they appear
_POSITIVE_KEYS = {
    "reps",
    "cap",
    "t_end",
    "t",
    "dx",
    "L",
    "n_directions",
    "n_max",
    "member_reps",
    "survival_reps",
    "ldp_reps",
    "frame_every",
    "kernel_reps",
    "window_reps",
    "T0",
}
_UNIT_INTERVAL_KEYS = {"epsilon", "kappa"}
_FIELD_KEYS = {"dim", "offset", "modes"}
_MODE_KEYS = {"k", "amp", "phase"}
_POLICIES = ("reject", "conservative")
_DT_LIMITS = {
    "tilted": TiltedConstants.MAX_DT,
    "fkpp": None,  # checked against dx by the solver
}


@dataclasses.dataclass
class ExperimentConfig:
    """One experiment: a field, run settings and a parameter block per subcommand"""

    field: dict
    seed: int = 0
    output_dir: str = "results"
    threads: int = 1
    dump: bool = False
    file_logging: bool = True
    blocks: dict[str, dict] = dataclasses.field(default_factory=dict)

    def block(self, name: str) -> dict:
        """Parameter block for a subcommand (dashes map to underscores)."""
        return self.blocks[name.replace("-", "_")]

    def build_field(self) -> PeriodicField:
        return field_from_dict(self.field)

    def to_dict(self) -> dict:
        data = {
            "version": ConfigManager.SCHEMA_VERSION,
            "field": copy.deepcopy(self.field),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "threads": self.threads,
            "dump": self.dump,
            "file_logging": self.file_logging,
        }
        for name in SUBCOMMAND_BLOCKS:
            data[name] = copy.deepcopy(self.blocks.get(name, {}))
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(
            field=copy.deepcopy(data["field"]),
            seed=int(data["seed"]),
            output_dir=str(data["output_dir"]),
            threads=int(data["threads"]),
            dump=bool(data["dump"]),
            file_logging=bool(data["file_logging"]),
            blocks={name: copy.deepcopy(data[name]) for name in SUBCOMMAND_BLOCKS},
        )


class ConfigManager:
    """Loads, validates and saves experiment files"""

    SCHEMA_VERSION = "1.0"

    def __init__(self, config_path: str | Path | None = None):
        self.config_path = None if config_path is None else Path(config_path)
        self.config = self.load()

    def load(self) -> dict:
        """
        Load the experiment file and merge it over the defaults.

        Raises:
            ConfigLoadError: If the file is missing or is not valid JSON
            ConfigValidationError: On unknown keys or out-of-range values
        """
        if self.config_path is None:
            logger.info("No config file given, using defaults")
            return self._default_schema()
        try:
            with self.config_path.open(encoding="utf-8") as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            logger.error(f"Invalid JSON in config file: {e}")
            raise ConfigLoadError(f"Invalid JSON in {self.config_path}: {e}") from e
        except OSError as e:
            logger.error(f"Error reading config file: {e}")
            raise ConfigLoadError(f"Cannot read config {self.config_path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigValidationError("Top level of the config must be an object")

        config = self.merge(self._default_schema(), user)
        self.validate(config)
        logger.info(f"Configuration loaded from {self.config_path}")
        return config

    def save(self, path: str | Path | None = None) -> Path:
        """Write the (merged) configuration as JSON with sorted keys."""
        target = Path(path) if path is not None else self.config_path
        if target is None:
            raise ConfigSaveError("No path to save the configuration to")
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with target.open("w", encoding="utf-8", newline="\n") as f:
                json.dump(self.config, f, indent=2, sort_keys=True)
                f.write("\n")
            logger.debug(f"Configuration saved to {target}")
        except OSError as e:
            logger.error(f"Error saving config: {e}")
            raise ConfigSaveError(f"Cannot save config: {e}") from e
        return target

    def experiment(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)

    def apply_overrides(
        self,
        seed: int | None = None,
        output_dir: str | None = None,
        threads: int | None = None,
        dump: bool | None = None,
    ) -> None:
        """Command-line flags take precedence over file values."""
        if seed is not None:
            self.config["seed"] = seed
        if output_dir is not None:
            self.config["output_dir"] = output_dir
        if threads is not None:
            self.config["threads"] = threads
        if dump:
            self.config["dump"] = True
        self.validate(self.config)

    @classmethod
    def merge(cls, defaults: dict, user: dict, path: str = "") -> dict:
        """
        Overlay user values on defaults, rejecting keys the defaults lack.

        The field block is taken whole from the user when present.
        """
        merged = copy.deepcopy(defaults)
        for key, value in user.items():
            dotted = f"{path}.{key}" if path else key
            if key not in defaults:
                raise ConfigValidationError(f"Unknown config key '{dotted}'")
            if dotted == "field":
                merged[key] = copy.deepcopy(value)
            elif isinstance(defaults[key], dict):
                if not isinstance(value, dict):
                    raise ConfigValidationError(f"'{dotted}' must be an object")
                merged[key] = cls.merge(defaults[key], value, dotted)
            else:
                merged[key] = copy.deepcopy(value)
        return merged

    @classmethod
    def validate(cls, config: dict) -> None:
        """
        Check types and ranges of a merged configuration.

        Raises:
            ConfigValidationError: Naming the dotted key at fault
        """
        defaults = cls._default_schema()
        cls._check_field(config.get("field"))
        if not isinstance(config.get("seed"), int) or isinstance(config.get("seed"), bool) or config["seed"] < 0:
            raise ConfigValidationError("'seed' must be a nonnegative integer")
        if not isinstance(config.get("threads"), int) or config["threads"] < 1:
            raise ConfigValidationError("'threads' must be an integer >= 1")
        if not isinstance(config.get("dump"), bool) or not isinstance(config.get("file_logging"), bool):
            raise ConfigValidationError("'dump' and 'file_logging' must be true or false")
        if not isinstance(config.get("output_dir"), str) or not config["output_dir"]:
            raise ConfigValidationError("'output_dir' must be a non-empty string")
        for name in SUBCOMMAND_BLOCKS:
            cls._check_block(name, config[name], defaults[name])

    @staticmethod
    def _check_field(block: Any) -> None:
        if not isinstance(block, dict):
            raise ConfigValidationError("'field' must be an object with dim, offset and modes")
        for key in block:
            if key not in _FIELD_KEYS:
                raise ConfigValidationError(f"Unknown config key 'field.{key}'")
        for i, mode in enumerate(block.get("modes", [])):
            if isinstance(mode, dict):
                for key in mode:
                    if key not in _MODE_KEYS:
                        raise ConfigValidationError(f"Unknown config key 'field.modes[{i}].{key}'")
        try:
            field_from_dict(block)
        except FieldError as e:
            raise ConfigValidationError(f"'field': {e}") from e

    @staticmethod
    def _check_block(name: str, block: dict, defaults: dict) -> None:
        for key, value in block.items():
            dotted = f"{name}.{key}"
            default = defaults[key]
            if value is None:
                continue
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ConfigValidationError(f"'{dotted}' must be true or false")
                continue
            if isinstance(default, (int, float)):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigValidationError(f"'{dotted}' must be a number, got {value!r}")
                if isinstance(default, int) and not isinstance(default, bool) and not isinstance(value, int):
                    raise ConfigValidationError(f"'{dotted}' must be an integer, got {value!r}")
            if isinstance(default, list) and not isinstance(value, list):
                raise ConfigValidationError(f"'{dotted}' must be a list")
            if isinstance(default, str) and not isinstance(value, str):
                raise ConfigValidationError(f"'{dotted}' must be a string")

            if key in _POSITIVE_KEYS and value <= 0:
                raise ConfigValidationError(f"'{dotted}' must be positive, got {value}")
            if key in _UNIT_INTERVAL_KEYS and not 0.0 < value < 1.0:
                raise ConfigValidationError(f"'{dotted}' must lie in (0, 1), got {value}")
            if key == "dt":
                limit = _DT_LIMITS.get(name, SimulationConstants.MAX_DT)
                if value <= 0 or (limit is not None and value > limit):
                    raise ConfigValidationError(f"'{dotted}' must lie in (0, {limit}], got {value}")
            if key == "cap" and value < SimulationConstants.MIN_CAP:
                raise ConfigValidationError(f"'{dotted}' must be >= {SimulationConstants.MIN_CAP}, got {value}")
            if key == "policy" and value not in _POLICIES:
                raise ConfigValidationError(f"'{dotted}' must be one of {', '.join(_POLICIES)}")
            if key.endswith("t_list") and (not value or min(value) <= 0):
                raise ConfigValidationError(f"'{dotted}' must be a non-empty list of positive times")

    @staticmethod
    def _default_schema() -> dict:
        """Return default configuration schema"""
        return {
            "version": ConfigManager.SCHEMA_VERSION,
            "field": {"dim": 1, "offset": 1.0, "modes": []},
            "seed": 0,
            "output_dir": "results",
            "threads": 1,
            "dump": False,
            "file_logging": True,
            "eigen": {
                "direction": None,  # first coordinate axis
                "lambda_grid": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
                "truncation": None,
                "psi_grid": 64,
            },
            "speed": {
                "n_directions": 64,
                "truncation": None,
            },
            "rate": {
                "direction": None,
                "epsilon": 0.3,
                "beta_fraction": 0.5,  # beta = fraction * gamma(e, lambda_e)
                "window_target": 2.0,
            },
            "wulff": {
                "n_directions": 64,
                "epsilons": [0.1, 0.2],
                "spreading_samples": 8,
            },
            "simulate": {
                "x0": None,
                "t_end": 5.0,
                "snapshot_times": [1.0, 2.0, 3.0, 4.0, 5.0],
                "reps": 100,
                "dt": SimulationConstants.MAX_DT,
                "cap": SimulationConstants.DEFAULT_CAP,
                "direction": None,
                "T0": None,  # lineage window for gen_id/ancestor columns in the dump
            },
            "halfspace": {
                "direction": None,
                "epsilon": 0.3,
                "upper_t_list": [2.0, 4.0, 6.0, 8.0],
                "lower_t_list": [4.0, 8.0, 12.0],
                "reps": 2000,
                "dt": SimulationConstants.MAX_DT,
                "cap": SimulationConstants.DEFAULT_CAP,
                "policy": "conservative",
                "T0": None,  # tuned from the rate function when null
                "n_max": 5,
                "survival_reps": 200,
                "kernel_reps": 500,
            },
            "shape": {
                "n_directions": 64,
                "t_list": [4.0, 8.0, 12.0],
                "reps": 50,
                "cap": SimulationConstants.SHAPE_MIN_CAP,
                "dt": SimulationConstants.MAX_DT,
                "epsilon": 0.25,
            },
            "tilted": {
                "direction": None,
                "t": 50.0,
                "record_t_list": [5.0, 10.0, 20.0, 50.0],
                "reps": 10_000,
                "dt": TiltedConstants.MAX_DT,
                "etas": [-0.3, 0.3],
                "ldp_interval": None,  # [lo, hi]; hi may be 1e300 for an open ray
                "ldp_t_list": [2.0, 4.0, 6.0, 8.0],
                "ldp_reps": 100_000,
            },
            "fkpp": {
                "init": "heaviside",
                "L": 120.0,
                "dx": 0.05,
                "dt": None,  # 0.4 dx^2 when null
                "t_end": 40.0,
                "frame_every": 1.0,
            },
            "mckean": {
                "functional": "halfspace",
                "t": 2.0,
                "x_probes": [-2.0, -1.0, 0.0, 1.0, 2.0],
                "reps": 2000,
                "dx": 0.05,
                "dt": SimulationConstants.MAX_DT,
                "cap": SimulationConstants.DEFAULT_CAP,
            },
            "verify_all": {
                "criteria": [],  # empty runs every criterion
            },
        }
