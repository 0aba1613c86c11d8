"""Run configuration with TOML file override."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ParameterError
from .geometry import DEFAULT_K, AngleSet
from .raster import DEFAULT_RESOLUTION
from .sampling import DEFAULT_T
from .supervision import CostWeights

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


@dataclass(frozen=True)
class RunConfig:
    K: int = DEFAULT_K
    T: int = DEFAULT_T
    rmask_resolution: int = DEFAULT_RESOLUTION
    weights: CostWeights = field(default_factory=CostWeights)
    grid_n: int = 64
    seed: int = 0
    jobs: int = 1
    phase: float = 0.0

    def __post_init__(self):
        if self.K < 3:
            raise ParameterError("K must be >= 3")
        if self.T < 1:
            raise ParameterError("T must be >= 1")
        if self.rmask_resolution < 2:
            raise ParameterError("rmask_resolution must be >= 2")
        if self.grid_n < 4:
            raise ParameterError("grid_n must be >= 4")
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")

    @property
    def angles(self) -> AngleSet:
        return AngleSet(self.K, self.phase)


_KEYS = {f.name for f in fields(RunConfig)}
_ALIASES = {"k": "K", "t": "T", "rmask_res": "rmask_resolution", "rmask-res": "rmask_resolution",
            "grid-n": "grid_n"}


def _normalise(raw: dict) -> dict:
    out = {}
    for key, value in raw.items():
        name = _ALIASES.get(key, key.replace("-", "_"))
        if name not in _KEYS:
            raise ParameterError(f"unknown config key {key!r}")
        if name == "weights":
            if isinstance(value, dict):
                value = CostWeights(**value)
            else:
                value = CostWeights.from_sequence(value)
        out[name] = value
    return out


def load_config(path=None, **overrides) -> RunConfig:
    """Defaults, then the TOML file (if any), then non-None ``overrides``."""
    values = {}
    if path is not None:
        with Path(path).open("rb") as fh:
            values.update(_normalise(tomllib.load(fh)))
    values.update(_normalise({k: v for k, v in overrides.items() if v is not None}))
    return replace(RunConfig(), **values)
