"""
Run configuration: a flat, ordered text of dotted ``key = value`` lines.

Blank lines and ``#`` comments are ignored. Every key has a typed default in
``DEFAULTS``; unknown or repeated keys are errors that name the line.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .decay import CurveSpec
from .diagnostics import DiagnosticsError, check_r1_window, radial_cutoff_profile, redshift_profile
from .evolution import GridSpec, InitialData, ModeSpec
from .fields import PotentialSpec
from .geometry import BackgroundParams

DEFAULTS = {
    "background.m": 1.0,
    "grid.w0": 0.0,
    "grid.w1": 40.0,
    "grid.v0": 0.0,
    "grid.v1": 40.0,
    "grid.delta": 0.0625,
    "sector": "nonlinear",
    "mode.s": 0,
    "mode.ell": 0,
    "data.profile": "zero",
    "data.amplitude": 0.0,
    "data.center": 10.0,
    "data.width": 3.0,
    "data.omega": 0.0,
    "data.ray": "outgoing",
    "data.Q0": 0.0,
    "data.gauge_amplitude": 0.0,
    "data.gauge_wavenumber": 0.0,
    "potential.kind": "Mass",
    "potential.c1": 0.0,
    "potential.c2": 0.0,
    "potential.c3": 0.0,
    "potential.eta": 1.0,
    "potential.c4": 0.0,
    "potential.lam": 1.0,
    "evolution.n_iter": 2,
    "multiplier.r1": 2.4,
    "multiplier.f.kind": "smooth",
    "multiplier.f.width": 0.5,
    "multiplier.h.enabled": True,
    "multiplier.h.plateau": 1.0,
    "multiplier.h.tilt": 0.5,
    "multiplier.h.rise_start": "edge",
    "multiplier.h.rise_width": 2.0,
    "multiplier.h.fall_fraction": 0.8,
    "diagnostics.t0": "auto",
    "diagnostics.ladder_ratio": 1.1,
    "diagnostics.slices": 9,
    "diagnostics.r0": 2.05,
    "diagnostics.R0": 20.0,
    "diagnostics.coulomb_tail": True,
    "curves": "r_const:4.0",
    "curves.quantities": "|phi|,|D_phi|,|F_vw|",
    "fit.envelope": "auto",
    "suite.drift_tol": 1e-2,
    "output.history": True,
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, text: str, line_no: int):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError("expected true or false")
            return low == "true"
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            val = float(text)
            if not math.isfinite(val):
                raise ValueError("value must be finite")
            return val
        if isinstance(default, str) and default in ("edge", "auto"):
            return text if text == default else float(text)
    except ValueError as exc:
        raise ConfigError(f"line {line_no}: bad value for {key}: {text!r} ({exc})") from None
    return text


def parse_config_text(text: str) -> dict:
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = _coerce(key, value, line_no)
    return values


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def background(self) -> BackgroundParams:
        return BackgroundParams(self["background.m"])

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self["grid.w0"], self["grid.w1"], self["grid.v0"], self["grid.v1"], self["grid.delta"])

    @property
    def sector(self) -> str:
        return self["sector"]

    @property
    def potential(self) -> PotentialSpec:
        return PotentialSpec(self["potential.kind"], self["potential.c1"], self["potential.c2"],
                             self["potential.c3"], self["potential.eta"], self["potential.c4"],
                             self["potential.lam"])

    @property
    def mode(self) -> ModeSpec:
        pot = self.potential
        trivial = pot.kind == "Mass" and pot.c1 == 0.0
        return ModeSpec(self["mode.s"], self["mode.ell"], None if (trivial or self["mode.s"] == 1) else pot)

    @property
    def data(self) -> InitialData:
        return InitialData(self["data.profile"], self["data.amplitude"], self["data.center"],
                           self["data.width"], self["data.omega"], self["data.ray"], self["data.Q0"],
                           self["data.gauge_amplitude"], self["data.gauge_wavenumber"])

    def data_support(self):
        """Interval on the initial ray outside which the profile vanishes (None for zero data)."""
        d = self.data
        if d.profile == "zero" or d.amplitude == 0.0:
            return None
        half = d.width if d.profile == "compact-bump" else 6.0 * d.width
        return (d.center - half, d.center + half)

    def h_profile(self):
        grid = self.grid
        start = self["multiplier.h.rise_start"]
        if start == "edge":
            start = 0.5 * (grid.v0 - grid.w1)
        return redshift_profile(self.background, self["multiplier.r1"], height=self["multiplier.h.plateau"],
                                tilt=self["multiplier.h.tilt"], rise_start=float(start),
                                rise_width=self["multiplier.h.rise_width"],
                                fall_fraction=self["multiplier.h.fall_fraction"])

    def f_profile(self):
        return radial_cutoff_profile(self.background, self["multiplier.r1"], self["multiplier.f.kind"],
                                     self["multiplier.f.width"])

    def curves(self) -> list:
        out = []
        for item in filter(None, (s.strip() for s in self["curves"].split(","))):
            kind, _, value = item.partition(":")
            out.append(CurveSpec(kind.strip(), float(value) if value else 0.0))
        return out

    def quantities(self) -> list:
        return [q.strip() for q in self["curves.quantities"].split(",") if q.strip()]

    def text(self) -> str:
        """Canonical text: every key in default order with its effective value."""
        return "".join(f"{k} = {_format(self.values[k])}\n" for k in DEFAULTS)

    @property
    def config_hash(self) -> str:
        body = self.text().encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    @property
    def run_id(self) -> str:
        return self.config_hash[:12]

    def updated(self, updates: dict) -> "RunConfig":
        merged = dict(self.values)
        merged.update(updates)
        return validate(merged)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def validate(values: dict) -> RunConfig:
    merged = dict(DEFAULTS)
    merged.update(values)
    cfg = RunConfig(merged)
    try:
        cfg.background
        cfg.grid
        cfg.potential
        cfg.data
        if cfg.sector not in ("nonlinear", "mode"):
            raise ValueError(f"sector must be nonlinear or mode, got {cfg.sector!r}")
        if cfg.sector == "mode":
            cfg.mode
        cfg.curves()
        if cfg["diagnostics.ladder_ratio"] <= 1.0:
            raise ValueError("diagnostics.ladder_ratio must exceed 1")
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["multiplier.h.enabled"]:
        try:
            check_r1_window(cfg.background, cfg["multiplier.r1"])
        except DiagnosticsError as exc:
            raise ConfigError(f"multiplier.r1: {exc}") from None
        try:
            cfg.h_profile()
        except ValueError as exc:
            raise ConfigError(f"multiplier.h: {exc}") from None
    return cfg


def load_config(text: str) -> RunConfig:
    return validate(parse_config_text(text))


def default_config() -> RunConfig:
    return validate({})
