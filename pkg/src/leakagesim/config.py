"""Simulation configuration.

Defaults reproduce the 2.2 kW reference design (220 Vrms / 50 Hz grid,
400 V DC link, 1500 uF input capacitors, 4.06 mH filter inductors, 24 nF PV
parasitic capacitance, 20 kHz MPPT carrier).  Controller gains, hysteresis
band, PV curve and damping are engineering choices and are exposed here.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .topology import TopologyKind

#: Largest timestep accepted; the 24 nF CM loop rings near 23 kHz.
MAX_DT = 2e-6
MIN_METRIC_PERIODS = 10

DC_SOURCES = ("pv", "ideal")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str = None, line: int = None):
        super().__init__(message)
        self.field = field
        self.line = line


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyKind = TopologyKind.HCH5_D2
    # grid
    v_grid_rms: float = 220.0
    grid_freq: float = 50.0
    grid_phase: float = 0.0
    # DC link and PV stage
    v_dc_ref: float = 400.0
    c_in: float = 1500e-6
    f_mppt: float = 20e3
    p_out_nominal: float = 2200.0
    dc_source: str = "pv"
    pv_voc: float = 300.0
    pv_isc: float = 10.0
    mppt_rate: float = 100.0
    mppt_step: float = 1.0
    mppt_v_init: float = 240.0
    # output filter and CM path
    l_a: float = 4.06e-3
    l_b: float = 4.06e-3
    c_pv: float = 24e-9
    r_s: float = 0.1
    r_ground: float = 150.0
    c_filter: float = 0.0
    l_grid: float = 0.0
    # control
    hbcc_band: float = 0.4
    pi_kp: float = 0.05
    pi_ki: float = 5.0
    pi_clamp: float = 20.0
    # run
    dt: float = 1e-6
    duration: float = 0.5
    blanking: float = 0.04

    def __post_init__(self):
        try:
            object.__setattr__(self, "topology", TopologyKind.parse(self.topology))
        except ValueError as exc:
            raise ConfigError(str(exc), field="topology") from None
        for f in fields(self):
            if f.type in ("float", float):
                v = getattr(self, f.name)
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{f.name}: expected a number, got {v!r}", field=f.name)
                object.__setattr__(self, f.name, float(v))
                if not math.isfinite(float(v)):
                    raise ConfigError(f"{f.name}: must be finite", field=f.name)
        self._validate()

    def _validate(self):
        positive = ("v_grid_rms", "grid_freq", "v_dc_ref", "c_in", "f_mppt", "p_out_nominal",
                    "pv_voc", "pv_isc", "mppt_rate", "mppt_step", "mppt_v_init",
                    "l_a", "l_b", "c_pv", "hbcc_band", "pi_ki", "pi_clamp", "dt", "duration")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be > 0, got {getattr(self, name)!r}", field=name)
        for name in ("r_s", "r_ground", "c_filter", "l_grid", "pi_kp", "blanking"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be >= 0, got {getattr(self, name)!r}", field=name)
        if self.dt > MAX_DT:
            raise ConfigError(
                f"dt: {self.dt:g} s exceeds the {MAX_DT:g} s stability bound of the CM loop",
                field="dt")
        min_duration = MIN_METRIC_PERIODS / self.grid_freq
        if self.duration < min_duration - 1e-12:
            raise ConfigError(
                f"duration: metric runs need >= {MIN_METRIC_PERIODS} grid periods "
                f"({min_duration:g} s), got {self.duration:g} s", field="duration")
        if self.dc_source not in DC_SOURCES:
            raise ConfigError(f"dc_source: expected one of {DC_SOURCES}, got {self.dc_source!r}",
                              field="dc_source")
        if self.mppt_rate > self.f_mppt:
            raise ConfigError("mppt_rate: P&O decisions cannot be faster than f_mppt",
                              field="mppt_rate")
        if 1.0 / self.f_mppt < self.dt:
            raise ConfigError("f_mppt: carrier period shorter than dt", field="f_mppt")
        if (self.c_filter > 0) != (self.l_grid > 0):
            raise ConfigError("c_filter and l_grid must be given together (LCL extension)",
                              field="c_filter")
        if not self.mppt_v_init < self.pv_voc:
            raise ConfigError("mppt_v_init: must lie below pv_voc", field="mppt_v_init")
        if not self.p_out_nominal < self.pv_voc * self.pv_isc:
            raise ConfigError("p_out_nominal: must lie below pv_voc * pv_isc", field="p_out_nominal")

    @property
    def lcl(self) -> bool:
        return self.c_filter > 0

    @property
    def omega(self) -> float:
        return 2 * math.pi * self.grid_freq

    @property
    def i_peak_nominal(self) -> float:
        return math.sqrt(2) * self.p_out_nominal / self.v_grid_rms

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["topology"] = self.topology.value
        return d


FIELD_NAMES = tuple(f.name for f in fields(SimConfig))


def config_from_mapping(data: dict, base: SimConfig = None) -> SimConfig:
    unknown = sorted(set(data) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", field=unknown[0])
    base = base or SimConfig()
    return base.replace(**data)


def load_config(path) -> SimConfig:
    """Read a TOML file of ``key = value`` pairs named after :class:`SimConfig`
    fields (SI units).  Missing keys keep their defaults."""
    path = Path(path)
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"{path}: parse error: {exc}", line=line) from None
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: tables are not supported ([{nested[0]}])", field=nested[0])
    return config_from_mapping(data)
