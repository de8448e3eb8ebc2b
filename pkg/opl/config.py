"""Configuration management for opl."""

import os
from pathlib import Path
from typing import List, Optional

import yaml

from opl.exact import default_threads


class ConfigError(Exception):
    """Configuration error."""

    pass


DEFAULT_SAMPLES = 1_000_000
DEFAULT_SCAN_POINTS = 11
DEFAULT_ROOT_GRID = 10_000
DEFAULT_PAIR_MAX_N = 12


def get_data_dir() -> Path:
    """Data directory from OPL_DATA_DIR or ./data."""
    env_dir = os.environ.get("OPL_DATA_DIR")
    if env_dir:
        return Path(env_dir)
    return Path.cwd() / "data"


class Config:
    """Run defaults stored in <data_dir>/config.yaml."""

    def __init__(self, data_dir: Optional[Path] = None):
        """Defaults, with paths under data_dir."""
        if data_dir is None:
            data_dir = get_data_dir()
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)

        self.config_path = self.data_dir / "config.yaml"
        self.records_path = self.data_dir / "runs.jsonl"
        self.log_path = self.data_dir / "opl.log"

        self.threads: int = default_threads()
        self.seed: int = 0
        self.samples: int = DEFAULT_SAMPLES
        self.deep: bool = False
        self.scan_points: int = DEFAULT_SCAN_POINTS
        self.root_grid: int = DEFAULT_ROOT_GRID
        self.pair_max_n: int = DEFAULT_PAIR_MAX_N
        self._cache_dir: Optional[Path] = None

    @property
    def cache_dir(self) -> Path:
        """OPL_CACHE wins over the configured directory."""
        env_dir = os.environ.get("OPL_CACHE")
        if env_dir:
            return Path(env_dir)
        return self._cache_dir or self.data_dir / "cache"

    def exists(self) -> bool:
        """Whether config.yaml has been written."""
        return self.config_path.exists()

    def set_threads(self, threads: int) -> None:
        """Set the worker process count."""
        if threads < 1:
            raise ConfigError(f"threads must be at least 1, got {threads}")
        self.threads = threads

    def set_seed(self, seed: int) -> None:
        """Set the default Monte Carlo seed."""
        if seed < 0:
            raise ConfigError(f"seed must be non-negative, got {seed}")
        self.seed = seed

    def set_samples(self, samples: int) -> None:
        """Set the default samples per estimate."""
        if samples < 1000:
            raise ConfigError(f"samples must be at least 1000, got {samples}")
        self.samples = samples

    def set_scan_points(self, points: int) -> None:
        """Set the default number of scan grid points."""
        if points < 1:
            raise ConfigError(f"scan_points must be at least 1, got {points}")
        self.scan_points = points

    def set_root_grid(self, grid: int) -> None:
        """Set the root isolation grid size."""
        if grid < 1:
            raise ConfigError(f"root_grid must be at least 1, got {grid}")
        self.root_grid = grid

    def set_pair_max_n(self, max_n: int) -> None:
        """Set the largest n for concrete path enumeration."""
        if max_n < 3:
            raise ConfigError(f"pair_max_n must be at least 3, got {max_n}")
        self.pair_max_n = max_n

    def set_cache_dir(self, cache_dir: Optional[Path]) -> None:
        """Set or clear the configured cache directory."""
        self._cache_dir = Path(cache_dir) if cache_dir else None

    def save(self) -> None:
        """Save configuration to YAML file."""
        data = {
            "compute": {
                "threads": self.threads,
                "deep": self.deep,
                "cache_dir": str(self._cache_dir) if self._cache_dir else None,
            },
            "montecarlo": {
                "seed": self.seed,
                "samples": self.samples,
                "scan_points": self.scan_points,
            },
            "exact": {
                "root_grid": self.root_grid,
                "pair_max_n": self.pair_max_n,
            },
        }
        with open(self.config_path, "w") as f:
            yaml.dump(data, f, default_flow_style=False, sort_keys=False)

    def load(self) -> None:
        """Load configuration from YAML file."""
        if not self.config_path.exists():
            raise ConfigError(
                f"Config file not found: {self.config_path}\n"
                "Run 'opl setup' to configure."
            )

        with open(self.config_path) as f:
            try:
                data = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"Malformed config file {self.config_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Malformed config file {self.config_path}")

        try:
            compute = data.get("compute") or {}
            self.set_threads(int(compute.get("threads", self.threads)))
            self.deep = bool(compute.get("deep", False))
            self.set_cache_dir(compute.get("cache_dir"))

            mc = data.get("montecarlo") or {}
            self.set_seed(int(mc.get("seed", self.seed)))
            self.set_samples(int(mc.get("samples", self.samples)))
            self.set_scan_points(int(mc.get("scan_points", self.scan_points)))

            exact = data.get("exact") or {}
            self.set_root_grid(int(exact.get("root_grid", self.root_grid)))
            self.set_pair_max_n(int(exact.get("pair_max_n", self.pair_max_n)))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid value in {self.config_path}: {e}") from e

    def load_if_present(self) -> "Config":
        """Load config.yaml if it exists, else keep defaults."""
        if self.exists():
            self.load()
        return self

    def summary(self) -> List[tuple]:
        """(setting, value) pairs for display."""
        return [
            ("threads", self.threads),
            ("seed", self.seed),
            ("samples", self.samples),
            ("deep", self.deep),
            ("scan_points", self.scan_points),
            ("root_grid", self.root_grid),
            ("pair_max_n", self.pair_max_n),
            ("cache_dir", self.cache_dir),
        ]
