"""
Declarative run configuration.

A run is described by one TOML file whose tables and keys mirror
:data:`DEFAULTS`; every key is optional and unknown keys are rejected.
Command-line flags and ``--set table.key=value`` overrides are applied on top.
"""
from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import GridSpec, OpticalConfig
from .darkfield import FilterSpec, Modality
from .errors import ConfigError
from .phantoms import CircularScan, Deltas, Normal, PhantomSpec, SheppLogan3D, Sphere, SpiralScan
from .tomography import GpConfig

# ``None`` marks keys that are unset unless given
DEFAULTS: dict[str, dict[str, Any]] = {
    "optical": {"wavelength": 0.532, "n_medium": 1.574, "na_condenser": 1.2, "na_objective": 1.2},
    "grid": {"n": 128, "nx": None, "ny": None, "nz": None, "pitch": 0.1},
    "phantom": {"type": "sphere", "center": [0.0, 0.0, 0.0], "radius": 3.5, "n_inside": 1.5983,
                "scale": 4.0, "n_background": 1.337, "contrast": 0.02, "points": []},
    "illumination": {"pattern": "circular", "count": 49, "na_fraction": 0.95},
    "holography": {"enabled": False, "upsample": 2, "ref_amplitude": 1.0, "tilt": None},
    "noise": {"sigma": 0.0, "seed": None},
    "gp": {"enabled": True, "iterations": 8, "enforce_nonnegativity": True},
    "filter": {"shape": "gaussian", "cutoff": 1 / 7, "units": "cycles_per_um"},
    "ctf": {"modality": "ODT", "epsilon": None, "cutoff": None, "n_angles": 1024},
    "run": {"workers": 1, "output_dir": "out"},
}


def _check_keys(raw: dict) -> None:
    for table, body in raw.items():
        if table not in DEFAULTS:
            raise ConfigError(f"unknown config table [{table}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{table}] must be a table")
        for key in body:
            if key not in DEFAULTS[table]:
                raise ConfigError(f"unknown config key {table}.{key}")


def _merge(base: dict, raw: dict) -> dict:
    _check_keys(raw)
    out = copy.deepcopy(base)
    for table, body in raw.items():
        out[table].update(copy.deepcopy(body))
    return out


def parse_override(text: str) -> dict:
    """``table.key=value`` with a TOML value; bare words are taken as strings"""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} is not of the form table.key=value")
    path, value = text.split("=", 1)
    table, key = path.strip().split(".", 1)
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return {table: {key: parsed}}


@dataclass(frozen=True)
class RunConfig:
    """resolved configuration; ``data`` holds every table with defaults filled in"""
    data: dict

    @classmethod
    def load(cls, path: Optional[Path] = None, overrides: Sequence[dict] = ()) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                with open(path, "rb") as fh:
                    raw = tomllib.load(fh)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"{path}: {e}") from None
            data = _merge(data, raw)
        for o in overrides:
            data = _merge(data, o)
        cfg = cls(data)
        cfg.validate()
        return cfg

    def __getitem__(self, table: str) -> dict:
        return self.data[table]

    def validate(self) -> None:
        """build every sub-config once so errors surface before any work starts"""
        self.optical()
        self.grid()
        self.phantom()
        self.illumination()
        self.gp()
        self.filter()
        self.modality()
        if self["noise"]["sigma"] and self["noise"]["seed"] is None:
            raise ConfigError("noise.sigma > 0 needs an explicit noise.seed")
        if not isinstance(self["run"]["workers"], int) or self["run"]["workers"] < 1:
            raise ConfigError("run.workers must be a positive integer")
        if int(self["holography"]["upsample"]) < 1:
            raise ConfigError("holography.upsample must be >= 1")

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # typed views; any construction error is reported as a config error

    def optical(self) -> OpticalConfig:
        o = self["optical"]
        return _build(OpticalConfig, o["wavelength"], o["n_medium"], o["na_condenser"], o["na_objective"])

    def grid(self) -> GridSpec:
        g = self["grid"]
        n = g["n"]
        return _build(GridSpec, g["nx"] or n, g["ny"] or n, g["nz"] or n, g["pitch"])

    def phantom(self) -> PhantomSpec:
        p = self["phantom"]
        nm = self["optical"]["n_medium"]
        kind = p["type"]
        if kind == "sphere":
            variant = _build(Sphere, tuple(p["center"]), p["radius"], p["n_inside"])
        elif kind == "shepp_logan":
            variant = _build(SheppLogan3D, p["scale"], p["n_background"], p["contrast"])
        elif kind == "deltas":
            try:
                pts = tuple((tuple(map(float, q[:3])), float(q[3])) for q in p["points"])
            except (TypeError, IndexError, ValueError) as e:
                raise ConfigError(f"phantom.points must be [x, y, z, dn] rows: {e}") from None
            variant = Deltas(pts)
        else:
            raise ConfigError(f"unknown phantom.type {kind!r}")
        return PhantomSpec(variant, nm)

    def illumination(self):
        i = self["illumination"]
        pattern = i["pattern"]
        if pattern == "normal":
            return Normal()
        if pattern in ("circular", "spiral"):
            cls = CircularScan if pattern == "circular" else SpiralScan
            if not isinstance(i["count"], int) or i["count"] < 1:
                raise ConfigError("illumination.count must be a positive integer")
            if not 0 < i["na_fraction"] <= 1:
                raise ConfigError("illumination.na_fraction must lie in (0, 1]")
            return cls(i["count"], i["na_fraction"])
        raise ConfigError(f"unknown illumination.pattern {pattern!r}")

    def gp(self) -> GpConfig:
        g = self["gp"]
        if not isinstance(g["iterations"], int):
            raise ConfigError("gp.iterations must be an integer")
        return _build(GpConfig, g["iterations"], bool(g["enforce_nonnegativity"]))

    def filter(self) -> FilterSpec:
        f = self["filter"]
        return _build(FilterSpec, f["shape"], f["cutoff"], f["units"])

    def modality(self) -> Modality:
        return _build(Modality, self["ctf"]["modality"])


def _build(factory, *args):
    try:
        return factory(*args)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid {getattr(factory, '__name__', factory)}: {e}") from None
