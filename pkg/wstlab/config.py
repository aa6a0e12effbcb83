"""Experiment configuration: key=value files, beta grids and config hashing."""
import hashlib
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Literal

import numpy as np

logger = logging.getLogger(__name__)

OutputFormat = Literal["csv", "json"]

# keys that change where results go, not what they are
_UNHASHED = frozenset({"out", "fmt", "workers"})


class ConfigError(Exception):
    """Exception raised when an experiment configuration is invalid."""

    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment.

    Attributes:
        graph (str): Generator spec such as ``complete:n=200`` or a network
            file path.
        betas (tuple[float, ...], optional): Nonempty, nonnegative, sorted beta
            grid. ``None`` stands for :func:`default_beta_grid` of the graph
            size, resolved by :meth:`with_default_betas`.
        replicas (int): Environments (or trees) per beta point.
        samples (int): Trees sampled per environment.
        radius (int): Ball radius for census experiments.
        seed (int): Master seed.
        out (str, optional): Output path; ``None`` or ``-`` writes to stdout.
        solver (str): ``auto``, ``dense`` or ``iterative``.
        fmt (str): ``csv`` or ``json``.
        workers (int): Worker processes for replicas.
        roots_per_tree (int): Census roots observed per sampled tree.
        method (str): Tree sampler for environments: ``auto``, ``wilson`` or
            ``sequential``.
        window (float): Log-conductance band width of the extreme-range
            routines.
        theorem_samples (int): Monte-Carlo tuples per pattern for the census
            compatible-tuple column; zero disables it.
        gamma (float, optional): Strength scale of the typical vertex set;
            defaults to half the mean strength.
        K (float): Width of the typical strength window.
    """

    graph: str
    betas: tuple[float, ...] | None = None
    replicas: int = 20
    samples: int = 1
    radius: int = 1
    seed: int = 0
    out: str | None = None
    solver: str = "auto"
    fmt: OutputFormat = "csv"
    workers: int = 1
    roots_per_tree: int = 1
    method: str = "auto"
    window: float = 30.0
    theorem_samples: int = 0
    gamma: float | None = None
    K: float = 4.0  # noqa: N815

    def __post_init__(self):
        if self.betas is not None:
            self._check_betas()
        for name in ("replicas", "samples", "workers", "roots_per_tree"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1.")
        if self.radius < 0 or self.theorem_samples < 0 or self.seed < 0:
            raise ConfigError("radius, theorem_samples and seed must be nonnegative.")
        if self.solver not in ("auto", "dense", "iterative"):
            raise ConfigError(f"Unknown solver mode {self.solver!r}.")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"Unknown output format {self.fmt!r}.")
        if self.method not in ("auto", "wilson", "sequential"):
            raise ConfigError(f"Unknown sampling method {self.method!r}.")
        bad_gamma = self.gamma is not None and self.gamma <= 0
        if self.window <= 0 or self.K < 1 or bad_gamma:
            raise ConfigError("Need window > 0, K >= 1 and gamma > 0.")

    def _check_betas(self) -> None:
        if not self.betas:
            raise ConfigError("Beta grid is empty.")
        if any(not math.isfinite(b) or b < 0 for b in self.betas):
            raise ConfigError(
                f"Beta grid must be finite and nonnegative: {self.betas}."
            )
        if list(self.betas) != sorted(self.betas):
            raise ConfigError(f"Beta grid must be sorted: {self.betas}.")

    def override(self, **changes) -> "ExperimentConfig":
        """Copy with the non-``None`` entries of ``changes`` applied."""
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def with_default_betas(self, n: int) -> "ExperimentConfig":
        """Copy with an unset beta grid replaced by ``default_beta_grid(n)``."""
        if self.betas is not None:
            return self
        betas = default_beta_grid(n)
        logger.info(
            "No beta grid given; using %d points up to %.4g", len(betas), betas[-1]
        )
        return replace(self, betas=betas)


def parse_beta_grid(text: str) -> tuple[float, ...]:
    """Parse ``"0,1,10"`` or ``"a:b:steps:log|lin"`` into a sorted beta grid.

    Log grids need ``a > 0``. Duplicates are dropped.

    Raises:
        ConfigError: On malformed text or negative values.
    """
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (3, 4):
                raise ConfigError(
                    f"Range grid needs a:b:steps[:log|lin], got {text!r}."
                )
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
            scale = parts[3] if len(parts) == 4 else "log"
            if steps < 1:
                raise ConfigError("A range grid needs at least one step.")
            if scale == "log":
                if start <= 0 or stop <= 0:
                    raise ConfigError("Log grids need positive endpoints.")
                values = np.geomspace(start, stop, steps)
            elif scale == "lin":
                values = np.linspace(start, stop, steps)
            else:
                raise ConfigError(f"Unknown grid scale {scale!r}.")
            grid = [float(v) for v in values]
        else:
            grid = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise ConfigError(f"Cannot parse beta grid {text!r}: {err}") from err
    if not grid:
        raise ConfigError("Beta grid is empty.")
    if any(b < 0 for b in grid):
        raise ConfigError(f"Beta grid has negative values: {text!r}.")
    return tuple(sorted(set(grid)))


def default_beta_grid(n: int, points: int = 9) -> tuple[float, ...]:
    """Zero plus a log-spaced grid from 1 to ``100 n log n``.

    The phase transition of the environment model sits near the degree times
    a polylogarithmic factor, so for dense graphs the grid straddles it.
    """
    if n < 2 or points < 2:
        raise ConfigError("Need n >= 2 and at least two grid points.")
    top = 100.0 * n * math.log(n)
    return (0.0, *(float(b) for b in np.geomspace(1.0, top, points - 1)))


_CONVERTERS = {
    "graph": str,
    "replicas": int,
    "samples": int,
    "radius": int,
    "seed": int,
    "out": str,
    "solver": str,
    "fmt": str,
    "format": str,
    "workers": int,
    "roots_per_tree": int,
    "method": str,
    "window": float,
    "theorem_samples": int,
    "gamma": float,
    "K": float,
    "betas": parse_beta_grid,
    "beta": parse_beta_grid,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw ``key=value`` pairs of a config file; ``#`` starts a comment."""
    values: dict[str, str] = {}
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{number}: expected key=value, got {line!r}.")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def config_from_mapping(values: Mapping[str, object]) -> ExperimentConfig:
    """Build a config from string or typed values, converting by key.

    Raises:
        ConfigError: On unknown keys, bad values or a missing graph.
    """
    kwargs: dict[str, object] = {}
    for key, raw in values.items():
        if key not in _CONVERTERS:
            raise ConfigError(f"Unknown config key {key!r}.")
        converter = _CONVERTERS[key]
        try:
            value = converter(raw) if isinstance(raw, str) else raw
        except ValueError as err:
            raise ConfigError(f"Bad value for {key!r}: {raw!r}.") from err
        kwargs[{"beta": "betas", "format": "fmt"}.get(key, key)] = value
    if "graph" not in kwargs:
        raise ConfigError("Config needs a graph.")
    if isinstance(kwargs.get("betas"), list):
        kwargs["betas"] = tuple(kwargs["betas"])
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Load a ``key=value`` config file and apply non-``None`` overrides."""
    values: dict[str, object] = dict(read_config_file(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = config_from_mapping(values)
    logger.info("Loaded config %s (hash %s)", path, config_hash(config)[:12])
    return config


def canonical_form(config: ExperimentConfig) -> str:
    """Sorted ``key=value`` lines of every field that affects results."""
    lines = []
    for item in sorted(fields(config), key=lambda f: f.name):
        if item.name in _UNHASHED:
            continue
        value = getattr(config, item.name)
        if item.name == "betas" and value is not None:
            value = ",".join(repr(float(b)) for b in value)
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{item.name}={value}")
    return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 hex digest of :func:`canonical_form`."""
    return hashlib.sha256(canonical_form(config).encode("utf-8")).hexdigest()
