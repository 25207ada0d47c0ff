"""Flat key = value experiment configuration

A config file holds one key per line with optional `#` comments. There are no
sections and no includes; the file is read with configparser under an
injected section header. Values resolve in order: schema defaults, experiment
defaults, config file, `--set key=value` overrides, subcommand flags.
"""

from __future__ import annotations

import configparser
import hashlib
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Mapping

from entropy_lab.grid import Grid, GridField
from entropy_lab.heat_kernel import SYMBOLS
from entropy_lab.noise import NoiseSpace, sigma_from_key
from entropy_lab.util import DEFAULT_CHUNK_SIZE, DEFAULT_MAX_WORKERS, ConfigError, ToleranceBudget
from entropy_lab.viscous_solver import SolverConfig, flux_from_key, initial_field
from entropy_lab.weights import weight_from_key

logger = logging.getLogger(__name__)

"""Section header injected in front of every config file"""
SECTION = "lab"

"""Keys left out of the canonical serialization"""
UNHASHED = ("workers", "output")

"""Prefix of tolerance overrides, e.g. tol.c_dx = 0.5"""
TOL_PREFIX = "tol."


@dataclass(frozen=True)
class ExperimentConfig:
    """Every setting of one experiment run

    The numeric settings map one to one onto the schema keys; `tolerances`
    holds the `tol.<name>` overrides as sorted (name, value) pairs.
    """

    name: str = field(default="", metadata={"unit": "-"})
    n_x: int = field(default=256, metadata={"unit": "cells"})
    half_width: float = field(default=10.0, metadata={"unit": "length"})
    eps: float = field(default=0.05, metadata={"unit": "length^2/time"})
    dt: float = field(default=2e-4, metadata={"unit": "time"})
    t_final: float = field(default=0.5, metadata={"unit": "time"})
    flux: str = field(default="burgers:1.0", metadata={"unit": "key"})
    sigma: str = field(default="sin:0.5", metadata={"unit": "key"})
    weight: str = field(default="poly:4", metadata={"unit": "key"})
    noise_nodes: int = field(default=4, metadata={"unit": "nodes"})
    heat: str = field(default="lattice", metadata={"unit": "symbol"})
    initial: str = field(default="bump:1.0", metadata={"unit": "key"})
    initial_other: str = field(default="bump:0.5", metadata={"unit": "key"})
    n_mc: int = field(default=2000, metadata={"unit": "samples"})
    seed: int = field(default=20240601, metadata={"unit": "-"})
    snapshots: int = field(default=10, metadata={"unit": "times"})
    eps_list: tuple[float, ...] = field(default=(0.2, 0.1, 0.05), metadata={"unit": "length^2/time"})
    r0_steps: tuple[int, ...] = field(default=(8, 4, 2), metadata={"unit": "time steps"})
    r_list: tuple[float, ...] = field(default=(0.16, 0.24, 0.32, 0.48), metadata={"unit": "length"})
    p_list: tuple[int, ...] = field(default=(2, 4), metadata={"unit": "-"})
    kappa: float = field(default=0.5, metadata={"unit": "-"})
    eta: float = field(default=0.5, metadata={"unit": "-"})
    entropy: str = field(default="s_delta:0.05", metadata={"unit": "key"})
    trials: int = field(default=20, metadata={"unit": "-"})
    draws: int = field(default=1000, metadata={"unit": "-"})
    case: str = field(default="all", metadata={"unit": "key"})
    r_index: int = field(default=100, metadata={"unit": "step"})
    node: int = field(default=0, metadata={"unit": "node"})
    chunk_size: int = field(default=DEFAULT_CHUNK_SIZE, metadata={"unit": "samples"})
    workers: int = field(default=DEFAULT_MAX_WORKERS, metadata={"unit": "threads"})
    output: str = field(default="results", metadata={"unit": "directory"})
    tolerances: tuple[tuple[str, float], ...] = field(default=(), metadata={"unit": "-"})

    def __post_init__(self):
        positive = ("n_x", "half_width", "dt", "t_final", "n_mc", "noise_nodes", "snapshots", "chunk_size", "workers")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.eps < 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")
        if self.heat not in SYMBOLS:
            raise ConfigError(f"heat must be one of {SYMBOLS}, got '{self.heat}'")
        if not 0 < self.kappa <= 0.5:
            raise ConfigError(f"kappa must lie in (0, 1/2], got {self.kappa}")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError(f"t_final = {self.t_final} is not a multiple of dt = {self.dt}")
        if not 0 <= self.node < self.noise_nodes:
            raise ConfigError(f"node must lie in [0, {self.noise_nodes}), got {self.node}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def grid(self) -> Grid:
        return Grid(self.n_x, self.half_width)

    @property
    def space(self) -> NoiseSpace:
        return NoiseSpace.uniform(self.noise_nodes)

    def solver(self, **changes) -> SolverConfig:
        """The solver configuration; keys of ExperimentConfig may be overridden"""
        cfg = self.with_(**changes) if changes else self
        return SolverConfig(
            grid=cfg.grid,
            eps=cfg.eps,
            dt=cfg.dt,
            n_steps=cfg.n_steps,
            flux=flux_from_key(cfg.flux),
            sigma=sigma_from_key(cfg.sigma, cfg.space, cfg.half_width, cfg.kappa),
            weight=weight_from_key(cfg.weight),
            heat_symbol=cfg.heat,
        )

    def initial_data(self) -> tuple[GridField, GridField]:
        grid = self.grid
        return initial_field(self.initial, grid), initial_field(self.initial_other, grid)

    @property
    def r0_list(self) -> list[float]:
        return [s * self.dt for s in self.r0_steps]

    def tol(self, name: str, default: float) -> float:
        return dict(self.tolerances).get(name, default)

    def budget(self, default: ToleranceBudget) -> ToleranceBudget:
        """The default budget with any tol.c_dx, tol.c_dt, tol.c_eps, tol.n_se overrides"""
        names = ("c_dx", "c_dt", "c_eps", "n_se")
        return replace(default, **{n: self.tol(n, getattr(default, n)) for n in names})

    def with_(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)

    def canonical(self) -> str:
        """Sorted key = value lines of every number-affecting key"""
        lines = [
            f"{f.name} = {format_value(getattr(self, f.name))}"
            for f in fields(self)
            if f.name not in UNHASHED and f.name != "tolerances"
        ]
        lines += [f"{TOL_PREFIX}{k} = {format_value(v)}" for k, v in self.tolerances]
        return "\n".join(sorted(lines)) + "\n"

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def schema(self) -> list[tuple[str, str, str]]:
        """(key, value, unit) for every key"""
        return [(f.name, format_value(getattr(self, f.name)), f.metadata["unit"]) for f in fields(self)]


def format_value(value) -> str:
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{k}:{format_value(v)}" for k, v in value)
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_list(text: str, kind: type) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("empty list")
    return tuple(kind(s) for s in items)


_PARSERS = {
    "str": str,
    "int": int,
    "float": float,
    "tuple[float, ...]": lambda s: _parse_list(s, float),
    "tuple[int, ...]": lambda s: _parse_list(s, int),
}

_FIELDS = {f.name: f for f in fields(ExperimentConfig) if f.name != "tolerances"}


def parse_values(values: Mapping[str, str]) -> dict:
    """Typed values of a flat str -> str mapping

    Raises:
        ConfigError: unknown key or unparsable value
    """
    parsed, tolerances = {}, {}
    for key, text in values.items():
        key, text = key.strip(), str(text).strip()
        try:
            if key.startswith(TOL_PREFIX) and len(key) > len(TOL_PREFIX):
                tolerances[key[len(TOL_PREFIX) :]] = float(text)
                continue
            if key not in _FIELDS:
                raise ConfigError(f"Unknown config key '{key}'. Known keys: {', '.join(_FIELDS)}")
            parsed[key] = _PARSERS[_FIELDS[key].type](text)
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Unable to parse {key} = '{text}': {e}") from e
    if tolerances:
        parsed["tolerances"] = tuple(sorted(tolerances.items()))
    return parsed


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw key -> value pairs of a flat config file"""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{SECTION}]\n{text}", source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"Unable to read config file {path}: {e}") from e
    if parser.sections() != [SECTION]:
        raise ConfigError(f"Config file {path} must not contain sections")
    return dict(parser[SECTION])


def split_overrides(overrides: Iterable[str]) -> dict[str, str]:
    """key=value strings as a mapping"""
    out = {}
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Override '{item}' is not of the form key=value")
        out[key.strip()] = value.strip()
    return out


def resolve_config(
    name: str,
    defaults: Mapping[str, object] | None = None,
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    flags: Mapping[str, str] | None = None,
) -> ExperimentConfig:
    """Resolve the layered configuration of one experiment

    Args:
        name (str): the registry name of the experiment
        defaults: typed experiment defaults
        path: optional config file
        overrides: `key=value` strings from `--set`
        flags: raw values from subcommand flags

    Returns:
        ExperimentConfig: the validated configuration
    """
    layers = [dict(defaults or {})]
    if path is not None:
        layers.append(parse_values(read_config_file(path)))
    layers.append(parse_values(split_overrides(overrides)))
    layers.append(parse_values({k: v for k, v in (flags or {}).items() if v is not None}))
    values, tolerances = {}, {}
    for layer in layers:
        tolerances.update(layer.pop("tolerances", ()))
        values.update(layer)
    values["tolerances"] = tuple(sorted(tolerances.items()))
    values["name"] = name
    cfg = ExperimentConfig(**values)
    logger.debug("Resolved config %s for %s", cfg.hash[:12], name)
    return cfg
