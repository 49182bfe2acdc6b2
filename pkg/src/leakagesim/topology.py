"""Inverter topologies as mode tables.

Each topology maps the four operating modes of a single-phase bridge
(active/freewheel in each grid half-cycle) onto a switch vector and a pair
of pole voltages measured from the bridge midpoints A, B to the DC bus
negative rail N.  Switches are ideal: pole voltages come from the table,
not from device physics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class TopologyKind(str, enum.Enum):
    H4_UNIPOLAR = "h4_unipolar"
    H4_BIPOLAR = "h4_bipolar"
    H5_PLAIN = "h5_plain"
    HCH5_D2 = "hch5_d2"

    @classmethod
    def parse(cls, value: "str | TopologyKind") -> "TopologyKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"h4": "h4_unipolar", "h5": "h5_plain", "hch5d2": "hch5_d2"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown topology {value!r} (expected one of {names})") from None

    @property
    def has_q5(self) -> bool:
        return self in (TopologyKind.H5_PLAIN, TopologyKind.HCH5_D2)


class OperatingMode(enum.IntEnum):
    """Table rows (a)-(d); integer values are used in the mode trace."""

    ACTIVE_POSITIVE = 0
    FREEWHEEL_POSITIVE = 1
    ACTIVE_NEGATIVE = 2
    FREEWHEEL_NEGATIVE = 3

    @property
    def is_active(self) -> bool:
        return self in (OperatingMode.ACTIVE_POSITIVE, OperatingMode.ACTIVE_NEGATIVE)

    @property
    def half_cycle_sign(self) -> int:
        return 1 if self in (OperatingMode.ACTIVE_POSITIVE, OperatingMode.FREEWHEEL_POSITIVE) else -1


class ShootThroughError(ValueError):
    pass


@dataclass(frozen=True)
class SwitchVector:
    """On/off state of Q1..Q5.  For H4 bridges q5 is fixed on and ignored."""

    q1: bool
    q2: bool
    q3: bool
    q4: bool
    q5: bool = True

    def __post_init__(self):
        if self.q1 and self.q2:
            raise ShootThroughError("leg A shoot-through: Q1 and Q2 both on")
        if self.q3 and self.q4:
            raise ShootThroughError("leg B shoot-through: Q3 and Q4 both on")

    def as_bits(self) -> int:
        """Pack into an int, bit i-1 for Qi."""
        return sum(int(q) << i for i, q in enumerate((self.q1, self.q2, self.q3, self.q4, self.q5)))

    @classmethod
    def from_bits(cls, bits: int) -> "SwitchVector":
        return cls(*(bool(bits >> i & 1) for i in range(5)))


@dataclass(frozen=True)
class PoleVoltages:
    """Pole voltages V_AN, V_BN in volts.

    ``floating`` marks a decoupled freewheel state with no clamp (plain H5):
    the values are NaN and the circuit module decides the pole potential.
    """

    v_an: float
    v_bn: float
    floating: bool = False


FLOATING = PoleVoltages(math.nan, math.nan, floating=True)


def mode_from_command(half_cycle_sign: int, hbcc_active: bool) -> OperatingMode:
    if half_cycle_sign not in (1, -1):
        raise ValueError(f"half_cycle_sign must be +1 or -1, got {half_cycle_sign!r}")
    if half_cycle_sign > 0:
        return OperatingMode.ACTIVE_POSITIVE if hbcc_active else OperatingMode.FREEWHEEL_POSITIVE
    return OperatingMode.ACTIVE_NEGATIVE if hbcc_active else OperatingMode.FREEWHEEL_NEGATIVE


# Active vectors are shared by every bridge; Q5 closes the DC path.
_ACTIVE_POS = SwitchVector(q1=True, q2=False, q3=False, q4=True, q5=True)
_ACTIVE_NEG = SwitchVector(q1=False, q2=True, q3=True, q4=False, q5=True)

_SWITCH_TABLE = {
    # Freewheeling current circulates through Q1 and the body diode of Q3
    # (positive half) or Q3 and the body diode of Q1 (negative half) with Q5
    # open, isolating the PV side.
    TopologyKind.HCH5_D2: {
        OperatingMode.ACTIVE_POSITIVE: _ACTIVE_POS,
        OperatingMode.FREEWHEEL_POSITIVE: SwitchVector(True, False, False, False, False),
        OperatingMode.ACTIVE_NEGATIVE: _ACTIVE_NEG,
        OperatingMode.FREEWHEEL_NEGATIVE: SwitchVector(False, False, True, False, False),
    },
    # Upper-side zero state: the switching leg toggles, the other leg stays.
    TopologyKind.H4_UNIPOLAR: {
        OperatingMode.ACTIVE_POSITIVE: _ACTIVE_POS,
        OperatingMode.FREEWHEEL_POSITIVE: SwitchVector(True, False, True, False, True),
        OperatingMode.ACTIVE_NEGATIVE: _ACTIVE_NEG,
        OperatingMode.FREEWHEEL_NEGATIVE: SwitchVector(True, False, True, False, True),
    },
    # Two-level: a freewheel request applies the opposite active vector.
    TopologyKind.H4_BIPOLAR: {
        OperatingMode.ACTIVE_POSITIVE: _ACTIVE_POS,
        OperatingMode.FREEWHEEL_POSITIVE: _ACTIVE_NEG,
        OperatingMode.ACTIVE_NEGATIVE: _ACTIVE_NEG,
        OperatingMode.FREEWHEEL_NEGATIVE: _ACTIVE_POS,
    },
}
_SWITCH_TABLE[TopologyKind.H5_PLAIN] = _SWITCH_TABLE[TopologyKind.HCH5_D2]


def switch_vector(kind: TopologyKind, mode: OperatingMode) -> SwitchVector:
    return _SWITCH_TABLE[TopologyKind.parse(kind)][OperatingMode(mode)]


def pole_voltages(kind: TopologyKind, mode: OperatingMode, v_dc: float) -> PoleVoltages:
    """Pole voltages for ``mode`` on a DC link of ``v_dc`` volts.

    HCH5-D2 freewheel states are clamped to the DC-link midpoint, so the
    common-mode voltage is v_dc/2 in every mode.  Plain H5 freewheel states
    return :data:`FLOATING`.  H4 states follow from which switch of each leg
    conducts.
    """
    if not v_dc > 0:
        raise ValueError(f"v_dc must be positive, got {v_dc!r}")
    kind = TopologyKind.parse(kind)
    mode = OperatingMode(mode)
    if kind.has_q5 and not mode.is_active:
        if kind is TopologyKind.H5_PLAIN:
            return FLOATING
        return PoleVoltages(0.5 * v_dc, 0.5 * v_dc)
    sw = _SWITCH_TABLE[kind][mode]
    return PoleVoltages(v_dc if sw.q1 else 0.0, v_dc if sw.q3 else 0.0)
