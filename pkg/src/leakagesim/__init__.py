"""Switched-circuit simulation of leakage current in transformerless
single-phase PV inverters (H4, H5 and clamped HCH5-D2 bridges)."""

from .config import ConfigError, SimConfig, load_config
from .topology import OperatingMode, PoleVoltages, SwitchVector, TopologyKind

__version__ = "0.1.0"

__all__ = ["ConfigError", "OperatingMode", "PoleVoltages", "SimConfig", "SwitchVector",
           "TopologyKind", "load_config"]
