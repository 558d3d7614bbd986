"""
Configuration manager for the Yang-Mills-Dirac workbench
Loads one JSON run configuration, merges it over the defaults and validates it
"""

import copy
import json
import logging
import math
import os
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional

from core.errors import AdmissibilityError, ConfigError
from core.fields import check_admissible
from core.liealg import CONVENTIONS, PHYSICS

DEFAULT_CONFIG: Dict[str, Any] = {
    "grid": {"N": 16, "L": 2.0 * math.pi},
    "exponents": {"s": 0.9, "l": 0.5, "delta": 0.01},
    "data": {"eps": 1e-3, "seed": 0, "abelian": False},
    "integrator": {"dt": None, "T": 1.0, "picard_tol": 1e-12, "picard_max": 50},
    "convention": PHYSICS,
    "output": {"directory": "./ymd_output", "snapshot_stride": 100},
    "gauge": {"tol": 1e-10, "max_iter": 50},
    "experiment": {"dt_refinement": 10},
}


@dataclass(frozen=True)
class GridConfig:
    N: int
    L: float


@dataclass(frozen=True)
class ExponentConfig:
    s: float
    l: float
    delta: float


@dataclass(frozen=True)
class DataConfig:
    eps: float
    seed: int
    abelian: bool


@dataclass(frozen=True)
class IntegratorConfig:
    dt: Optional[float]
    T: float
    picard_tol: float
    picard_max: int

    @property
    def step(self) -> float:
        """The time step, T/1000 when unset"""
        return self.dt if self.dt is not None else self.T / 1000.0


@dataclass(frozen=True)
class OutputConfig:
    directory: str
    snapshot_stride: int


@dataclass(frozen=True)
class GaugeConfig:
    tol: float
    max_iter: int


@dataclass(frozen=True)
class ExperimentConfig:
    dt_refinement: int


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable run configuration"""

    grid: GridConfig
    exponents: ExponentConfig
    data: DataConfig
    integrator: IntegratorConfig
    convention: str
    output: OutputConfig
    gauge: GaugeConfig
    experiment: ExperimentConfig

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _merge(defaults: Dict[str, Any], overrides: Dict[str, Any], path: str = "") -> Dict[str, Any]:
    """Recursive merge that rejects keys absent from the defaults"""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"Unknown configuration key: {where}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Configuration section {where} must be an object")
            merged[key] = _merge(defaults[key], value, f"{where}.")
        else:
            merged[key] = value
    return merged


def _number(value: Any, name: str, positive: bool = True, allow_zero: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name} must be a finite number, got {value!r}")
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        raise ConfigError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value!r}")
    return float(value)


def _integer(value: Any, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def build_run_config(raw: Dict[str, Any]) -> RunConfig:
    """
    Validate a merged configuration dictionary

    Raises:
        ConfigError: On wrong types, non-positive numerics, an unknown
            convention or inadmissible exponents
    """
    grid, exponents, data = raw["grid"], raw["exponents"], raw["data"]
    integrator, output, gauge = raw["integrator"], raw["output"], raw["gauge"]

    N = _integer(grid["N"], "grid.N", minimum=8)
    if N & (N - 1):
        raise ConfigError(f"grid.N must be a power of two, got {N}")
    s = _number(exponents["s"], "exponents.s")
    l = _number(exponents["l"], "exponents.l")
    try:
        check_admissible(s, l)
    except AdmissibilityError as e:
        raise ConfigError(str(e)) from e
    if raw["convention"] not in CONVENTIONS:
        raise ConfigError(f"convention must be one of {CONVENTIONS}, got {raw['convention']!r}")
    if not isinstance(data["abelian"], bool):
        raise ConfigError("data.abelian must be true or false")
    dt = integrator["dt"]
    if not isinstance(output["directory"], str) or not output["directory"]:
        raise ConfigError("output.directory must be a non-empty string")

    return RunConfig(
        grid=GridConfig(N, _number(grid["L"], "grid.L")),
        exponents=ExponentConfig(s, l, _number(exponents["delta"], "exponents.delta")),
        data=DataConfig(
            _number(data["eps"], "data.eps", allow_zero=True),
            _integer(data["seed"], "data.seed", minimum=0),
            data["abelian"],
        ),
        integrator=IntegratorConfig(
            None if dt is None else _number(dt, "integrator.dt"),
            _number(integrator["T"], "integrator.T", allow_zero=True),
            _number(integrator["picard_tol"], "integrator.picard_tol"),
            _integer(integrator["picard_max"], "integrator.picard_max"),
        ),
        convention=raw["convention"],
        output=OutputConfig(output["directory"], _integer(output["snapshot_stride"], "output.snapshot_stride")),
        gauge=GaugeConfig(_number(gauge["tol"], "gauge.tol"), _integer(gauge["max_iter"], "gauge.max_iter")),
        experiment=ExperimentConfig(_integer(raw["experiment"]["dt_refinement"], "experiment.dt_refinement", minimum=2)),
    )


class ConfigManager:
    """
    Run configuration backed by an optional JSON file

    Without a file every value comes from DEFAULT_CONFIG. Loading errors are
    raised as ConfigError rather than silently replaced by defaults, since a
    run must be reproducible from its configuration.
    """

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize the configuration manager

        Args:
            config_path: JSON file to load, or None for the defaults
        """
        self.config_path = config_path
        self.default_config = copy.deepcopy(DEFAULT_CONFIG)
        self.config = copy.deepcopy(DEFAULT_CONFIG)
        if config_path is not None:
            self.load_config()

    def load_config(self) -> None:
        """
        Load and validate the configuration file

        Raises:
            ConfigError: If the file is missing, is not valid JSON, has unknown
                keys or fails validation
        """
        try:
            with open(self.config_path, "r") as f:
                loaded = json.load(f)
        except OSError as e:
            raise ConfigError(f"Cannot read config {self.config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config {self.config_path} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("The configuration must be a JSON object")
        self.config = _merge(self.default_config, loaded)
        build_run_config(self.config)
        logging.debug(f"Loaded configuration from {self.config_path}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get a configuration value

        Args:
            key: Dotted key such as ``grid.N``
            default: Returned when the key does not exist

        Returns:
            Configuration value or default
        """
        node: Any = self.config
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set(self, key: str, value: Any) -> None:
        """
        Override one value (dotted key) and re-validate

        Raises:
            ConfigError: For unknown keys or an invalid result
        """
        parts = key.split(".")
        override: Dict[str, Any] = {}
        node = override
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
        updated = _merge(self.default_config, self.config)
        updated = _merge(updated, override)
        build_run_config(updated)
        self.config = updated

    def reset(self) -> None:
        """Reset every value to the defaults"""
        self.config = copy.deepcopy(self.default_config)

    def get_all(self) -> Dict[str, Any]:
        return copy.deepcopy(self.config)

    def run_config(self) -> RunConfig:
        return build_run_config(self.config)

    def export_config(self, path: str) -> bool:
        """
        Export the resolved configuration to a file

        Args:
            path: File path to export to

        Returns:
            bool: True if export was successful, False otherwise
        """
        try:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            with open(path, "w") as f:
                json.dump(self.config, f, indent=2, sort_keys=True)
                f.write("\n")
            return True
        except OSError as e:
            logging.error(f"Error exporting config: {e}")
            return False

    def __str__(self) -> str:
        return json.dumps(self.config, indent=2, sort_keys=True)
