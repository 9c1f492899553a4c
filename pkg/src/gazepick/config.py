"""Runtime configuration: dataclass sections, JSON files, env overrides.

A config file is a JSON object with one key per section; every key is
optional and falls back to the defaults below. Environment variables of
the form GAZEPICK_<SECTION>_<FIELD> (for example GAZEPICK_FILTER_Q or
GAZEPICK_SNAP_ENABLED) override both. Tuple-valued fields take
comma-separated values.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dwell import DwellConfig
from .geometry import Homography, WorkspaceBounds, WorkspacePoint
from .robot import Scene, load_scene
from .smoothing import FilterParams
from .workspace import ViewMapping

ENV_PREFIX = "GAZEPICK_"


@dataclass(frozen=True)
class ScreenConfig:
    w: float = 1280.0
    h: float = 720.0

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"screen must have positive extent, got {self.w}x{self.h}")


@dataclass(frozen=True)
class SnapConfig:
    enabled: bool = True
    hysteresis: float = 0.10

    def __post_init__(self) -> None:
        if not 0.0 <= self.hysteresis < 1.0:
            raise ValueError(f"hysteresis must be in [0, 1), got {self.hysteresis}")


@dataclass(frozen=True)
class SimConfig:
    speed_mps: float = 0.25
    clearance_m: float = 0.02
    fail_rate: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class PipelineConfig:
    hz: float = 30.0

    def __post_init__(self) -> None:
        if not self.hz > 0:
            raise ValueError(f"pipeline rate must be positive, got {self.hz}")


@dataclass(frozen=True)
class AppConfig:
    screen: ScreenConfig = field(default_factory=ScreenConfig)
    view: ViewMapping = field(default_factory=ViewMapping)
    filter: FilterParams = field(default_factory=FilterParams)
    snap: SnapConfig = field(default_factory=SnapConfig)
    dwell: DwellConfig = field(default_factory=DwellConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)


_SECTIONS = {
    "screen": ScreenConfig,
    "view": ViewMapping,
    "filter": FilterParams,
    "snap": SnapConfig,
    "dwell": DwellConfig,
    "sim": SimConfig,
    "pipeline": PipelineConfig,
}


def _coerce(raw: str, target_type) -> object:
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    # tuple-valued fields (dwell.rect): comma separated floats
    return tuple(float(part) for part in raw.split(","))


def _field_type(f: dataclasses.Field) -> type:
    # annotations are strings under deferred evaluation
    if isinstance(f.type, type):
        return f.type
    name = str(f.type)
    if name.startswith("tuple"):
        return tuple
    return {"float": float, "int": int, "bool": bool, "str": str}[name]


def _build_section(name: str, cls, file_values: dict, environ) -> object:
    values = dict(file_values)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    for f in dataclasses.fields(cls):
        env_key = f"{ENV_PREFIX}{name.upper()}_{f.name.upper()}"
        if env_key in environ:
            values[f.name] = _coerce(environ[env_key], _field_type(f))
        elif f.name in values and isinstance(values[f.name], list):
            values[f.name] = tuple(values[f.name])
    return cls(**values)


def load_config(path: str | None = None, environ=None) -> AppConfig:
    """Build the application config from defaults, a JSON file, and env vars."""
    environ = os.environ if environ is None else environ
    file_payload: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            file_payload = json.load(fh)
        unknown = set(file_payload) - set(_SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
    sections = {
        name: _build_section(name, cls, file_payload.get(name, {}), environ)
        for name, cls in _SECTIONS.items()
    }
    return AppConfig(**sections)


def default_homography() -> Homography:
    """Camera pixels to tabletop meters: 1 px = 1 mm, centered origin."""
    return Homography(
        np.array([[1e-3, 0.0, -0.64], [0.0, 1e-3, -0.36], [0.0, 0.0, 1.0]]),
        z_table=0.0,
    )


def default_bounds() -> WorkspaceBounds:
    return WorkspaceBounds(-0.7, 0.7, -0.45, 0.45, -0.02, 0.35)


def default_home() -> WorkspacePoint:
    return WorkspacePoint(0.0, 0.0, 0.2)


def default_scene() -> Scene:
    with resources.as_file(
        resources.files("gazepick.data").joinpath("default_scene.json")
    ) as path:
        return load_scene(str(path))
