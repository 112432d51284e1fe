"""Scenario configuration files.

A scenario is a flat ``key = value`` file (TOML syntax, arrays allowed).
Keys, with defaults:

=================  ==========================================================
name               label used in outputs (default: file stem)
geometry           "benchmark" (twelve two-sensor subarrays) or "custom"
extra_sensor       [x, y]: third sensor added to subarray 1 (benchmark only)
offsets            custom only: list of per-subarray position lists
displacements      custom only: first-sensor positions (default all zero)
doas_deg           source directions
power              per-source power (1.0)
correlation        correlation coefficient of a source pair (0.0)
sweep              "snr", "snapshots" or "sources"
snr_db             list; one value unless sweep = "snr"
snapshots          list; one value unless sweep = "snapshots"
sources            list of source counts (sweep = "sources")
doa_pool_deg       directions consumed in order for the source sweep
trials             Monte Carlo trials per point (100)
seed               master seed (0)
grid_step_deg      SPICE grid spacing (0.1)
fov_deg            open field of view ([-90, 90])
estimators         subset of ["spice", "mle", "mle_correlated"]
shared_sources     same source samples in all subarrays (false)
=================  ==========================================================
"""
from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .geometry import ArrayGeometry, benchmark_array

__all__ = ["ConfigError", "ScenarioConfig", "load_config", "load_preset", "preset_names",
           "parse_config"]

ESTIMATORS = ("spice", "mle", "mle_correlated")
SWEEPS = ("snr", "snapshots", "sources")


class ConfigError(ValueError):
    """Invalid scenario description."""


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    geometry: str = "benchmark"
    extra_sensor: list | None = None
    offsets: list | None = None
    displacements: list | None = None
    doas_deg: list = field(default_factory=lambda: [-11.4, -1.1])
    power: float = 1.0
    correlation: float = 0.0
    sweep: str = "snr"
    snr_db: list = field(default_factory=lambda: [10.0])
    snapshots: list = field(default_factory=lambda: [50])
    sources: list | None = None
    doa_pool_deg: list | None = None
    trials: int = 100
    seed: int = 0
    grid_step_deg: float = 0.1
    fov_deg: list = field(default_factory=lambda: [-90.0, 90.0])
    estimators: list = field(default_factory=lambda: ["spice", "mle"])
    shared_sources: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.geometry not in ("benchmark", "custom"):
            raise ConfigError(f"geometry must be 'benchmark' or 'custom', got {self.geometry!r}")
        if self.geometry == "custom" and not self.offsets:
            raise ConfigError("custom geometry needs 'offsets'")
        if self.geometry == "benchmark" and (self.offsets or self.displacements):
            raise ConfigError("'offsets'/'displacements' only apply to custom geometry")
        if self.sweep not in SWEEPS:
            raise ConfigError(f"sweep must be one of {SWEEPS}, got {self.sweep!r}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        swept = {"snr": "snr_db", "snapshots": "snapshots"}.get(self.sweep)
        for key in ("snr_db", "snapshots"):
            vals = getattr(self, key)
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{key} must be a non-empty list")
            if key != swept and len(vals) != 1:
                raise ConfigError(f"{key} must hold one value unless it is swept")
        if any(int(n) < 1 for n in self.snapshots):
            raise ConfigError("snapshot counts must be >= 1")
        if not self.power > 0:
            raise ConfigError("power must be positive")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            raise ConfigError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if "spice" not in self.estimators:
            raise ConfigError("'spice' must be selected; it initializes the ML estimators")
        lo, hi = self.fov_deg
        if not (self.grid_step_deg > 0 and hi > lo):
            raise ConfigError("invalid grid")
        if self.sweep == "sources":
            if not self.sources or not self.doa_pool_deg:
                raise ConfigError("source sweep needs 'sources' and 'doa_pool_deg'")
            if max(self.sources) > len(self.doa_pool_deg) or min(self.sources) < 1:
                raise ConfigError("source counts must lie in 1..len(doa_pool_deg)")
            if self.correlation:
                raise ConfigError("correlation applies to a fixed source pair only")
        directions = self.doa_pool_deg if self.sweep == "sources" else self.doas_deg
        if not directions:
            raise ConfigError("no source directions given")
        if any(not lo < d < hi for d in directions):
            raise ConfigError("directions must lie inside the field of view")
        if self.correlation and len(self.doas_deg) != 2:
            raise ConfigError("correlation needs exactly two sources")
        if not abs(self.correlation) <= 1:
            raise ConfigError("|correlation| must not exceed 1")

    def array(self) -> ArrayGeometry:
        if self.geometry == "benchmark":
            return benchmark_array(self.extra_sensor)
        return ArrayGeometry.from_offsets(self.offsets, self.displacements)

    def sweep_values(self) -> list:
        return {"snr": self.snr_db, "snapshots": self.snapshots, "sources": self.sources}[self.sweep]

    def point(self, i: int) -> dict:
        """Scenario parameters at sweep index ``i``."""
        v = self.sweep_values()[i]
        snr = float(v) if self.sweep == "snr" else float(self.snr_db[0])
        n = int(v) if self.sweep == "snapshots" else int(self.snapshots[0])
        if self.sweep == "sources":
            doas = [float(d) for d in self.doa_pool_deg[:int(v)]]
        else:
            doas = [float(d) for d in self.doas_deg]
        return dict(sweep=v, snr_db=snr, snapshots=n, doas_deg=doas)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def parse_config(data: dict, name: str = "scenario") -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    data = dict(data)
    data.setdefault("name", name)
    for key in ("snr_db", "snapshots", "sources", "doas_deg", "doa_pool_deg"):
        if key in data and not isinstance(data[key], list):
            data[key] = [data[key]]
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(data, path.stem)


def preset_names() -> list:
    files = resources.files("ncdoa.presets").iterdir()
    return sorted(p.name[:-5] for p in files if p.name.endswith(".toml"))


def load_preset(name: str) -> ScenarioConfig:
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    text = resources.files("ncdoa.presets").joinpath(name + ".toml").read_text()
    return parse_config(tomllib.loads(text), name)
