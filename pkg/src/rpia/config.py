"""Experiment configuration: schema, validation, YAML loading."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional, Union

import numpy as np
import yaml

from .errors import InvalidConfig

_CURVE_DEFAULT_SEEDS = tuple(range(10))
_SURFACE_DEFAULT_SEEDS = tuple(range(3))


@dataclass(frozen=True)
class SweepGrid:
    """Logarithmically spaced grid of candidate smoothing weights."""

    lo: float
    hi: float
    points: int

    def __post_init__(self):
        if self.lo <= 0.0 or self.hi < self.lo:
            raise InvalidConfig("sweep grid needs 0 < lo <= hi")
        if self.points < 1:
            raise InvalidConfig("sweep grid needs at least 1 point")

    def values(self) -> np.ndarray:
        return np.logspace(np.log10(self.lo), np.log10(self.hi), self.points)


# What the ``lambda`` config field may hold: an explicit weight, one of the
# two data-driven modes, or a sweep grid.
LambdaChoice = Union[float, str, SweepGrid]

_LAMBDA_MODES = ("estimate", "self-consistent")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "curve"                   # curve | surface
    generator: str = "rose"                  # rose | blob | boy | file
    input_path: Optional[str] = None
    m: int = 1000
    p: Optional[int] = None
    n_ctrl: int = 100                        # control index bound in u (n1)
    n_ctrl_v: Optional[int] = None           # control index bound in v (n2)
    block_size: int = 5
    block_size_v: Optional[int] = None
    lam: LambdaChoice = 0.0
    noise_amplitude: float = 10.0
    penalty_scale: float = 1600.0
    tolerance: float = 1e-8
    max_iter: int = 8000
    seeds: tuple[int, ...] = ()
    head_count: int = 50
    eps_lambda: float = 0.01
    inner_solver: str = "direct"             # direct | rpia
    trajectory_stride: int = 10
    workers: int = 1

    def __post_init__(self):
        if self.problem not in ("curve", "surface"):
            raise InvalidConfig(f"unknown problem {self.problem!r}")
        if self.generator not in ("rose", "blob", "boy", "file"):
            raise InvalidConfig(f"unknown generator {self.generator!r}")
        if self.generator == "file" and not self.input_path:
            raise InvalidConfig("generator 'file' requires input_path")
        if self.generator in ("rose", "blob") and self.problem != "curve":
            raise InvalidConfig(f"generator {self.generator!r} produces curve data")
        if self.generator == "boy" and self.problem != "surface":
            raise InvalidConfig("generator 'boy' produces surface data")
        if self.m < 1:
            raise InvalidConfig("m must be positive")
        if self.n_ctrl < 3:
            raise InvalidConfig("n_ctrl must be at least 3")
        if self.block_size < 1:
            raise InvalidConfig("block_size must be positive")
        if self.problem == "surface":
            if (self.p or 0) < 1 or (self.n_ctrl_v or 0) < 3:
                raise InvalidConfig("surface runs need positive p and n_ctrl_v >= 3")
        if isinstance(self.lam, str) and self.lam not in _LAMBDA_MODES:
            raise InvalidConfig(
                f"lambda must be a number, a sweep grid, or one of {_LAMBDA_MODES}"
            )
        if isinstance(self.lam, SweepGrid) and self.lam.points < 2:
            raise InvalidConfig("configured sweep grids need at least 2 points")
        if isinstance(self.lam, float) and self.lam < 0.0:
            raise InvalidConfig("lambda must be nonnegative")
        if self.noise_amplitude <= 0.0:
            raise InvalidConfig("noise_amplitude must be positive")
        if self.penalty_scale <= 0.0:
            raise InvalidConfig("penalty_scale must be positive")
        if self.tolerance <= 0.0:
            raise InvalidConfig("tolerance must be positive")
        if self.max_iter < 0:
            raise InvalidConfig("max_iter must be nonnegative")
        if self.head_count < 3:
            raise InvalidConfig("head_count must be at least 3")
        if self.eps_lambda <= 0.0:
            raise InvalidConfig("eps_lambda must be positive")
        if self.inner_solver not in ("direct", "rpia"):
            raise InvalidConfig("inner_solver must be 'direct' or 'rpia'")
        if self.trajectory_stride < 0 or self.workers < 1:
            raise InvalidConfig("trajectory_stride >= 0 and workers >= 1 required")
        if not self.seeds:
            default = (
                _SURFACE_DEFAULT_SEEDS if self.problem == "surface" else _CURVE_DEFAULT_SEEDS
            )
            object.__setattr__(self, "seeds", default)

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        provided = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **provided) if provided else self


def _parse_lambda(raw) -> LambdaChoice:
    if isinstance(raw, str):
        if raw in _LAMBDA_MODES:
            return raw
        try:
            return float(raw)
        except ValueError:
            raise InvalidConfig(f"cannot interpret lambda value {raw!r}") from None
    if isinstance(raw, dict):
        sweep = raw.get("sweep")
        if not isinstance(sweep, dict):
            raise InvalidConfig("lambda mapping must contain a 'sweep' entry")
        try:
            return SweepGrid(
                float(sweep["lo"]), float(sweep["hi"]), int(sweep["points"])
            )
        except KeyError as exc:
            raise InvalidConfig(f"sweep grid missing key {exc}") from None
    if isinstance(raw, (int, float)):
        return float(raw)
    raise InvalidConfig(f"cannot interpret lambda value {raw!r}")


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    """Build a validated config from a parsed YAML/JSON mapping."""
    if not isinstance(mapping, dict):
        raise InvalidConfig("config root must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    aliases = {"lambda": "lam", "input": "input_path"}
    kwargs = {}
    for key, value in mapping.items():
        name = aliases.get(key, key)
        if name not in known:
            raise InvalidConfig(f"unknown config key {key!r}")
        kwargs[name] = value
    if "lam" in kwargs:
        kwargs["lam"] = _parse_lambda(kwargs["lam"])
    if "seeds" in kwargs:
        seeds = kwargs["seeds"]
        if not isinstance(seeds, (list, tuple)) or not seeds:
            raise InvalidConfig("seeds must be a nonempty list")
        kwargs["seeds"] = tuple(int(s) for s in seeds)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Parse a YAML config file into a validated :class:`ExperimentConfig`."""
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_mapping(raw)
