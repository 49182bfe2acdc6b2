"""Dual-loop inverter control.

Outer loop: P&O MPPT on a static PV curve feeding an averaged boost stage,
and a PI regulator on the DC-link voltage that sets the active current
amplitude Id_ref.  Inner loop: the reference Id_ref*sin(theta) from the
inverse Park rotation (Iq_ref = 0) tracked by a latching hysteresis
comparator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

from scipy.optimize import brentq


@dataclass(frozen=True)
class PvPanel:
    """Static curve i = I_sc * (1 - (v/V_oc)**m), m fitted to the MPP power."""

    v_oc: float = 300.0
    i_sc: float = 10.0
    p_mpp: float = 2200.0

    def __post_init__(self):
        if not (self.v_oc > 0 and self.i_sc > 0):
            raise ValueError("v_oc and i_sc must be positive")
        if not 0 < self.p_mpp < self.v_oc * self.i_sc:
            raise ValueError("p_mpp must lie below V_oc * I_sc")

    @cached_property
    def exponent(self) -> float:
        # the MPP power rises monotonically in m towards V_oc*I_sc
        target = self.p_mpp / (self.v_oc * self.i_sc)
        return brentq(lambda m: _mpp_fraction(m) - target, 1e-6, 1e4, xtol=1e-14, rtol=1e-15)

    def current(self, v: float, m: float = None) -> float:
        if m is None:
            m = self.exponent
        if v <= 0:
            return self.i_sc
        if v >= self.v_oc:
            return 0.0
        return self.i_sc * (1.0 - (v / self.v_oc) ** m)

    def mpp(self):
        """Analytic (v_mp, p_mp)."""
        m = self.exponent
        v_mp = self.v_oc * (m + 1.0) ** (-1.0 / m)
        return v_mp, v_mp * self.current(v_mp, m)


def _mpp_fraction(m: float) -> float:
    return (m + 1.0) ** (-1.0 / m) * m / (m + 1.0)


@dataclass(frozen=True)
class MpptState:
    v_pv_ref: float
    step_size: float = 1.0
    v_max: float = math.inf
    last_power: float = 0.0
    last_voltage: float = 0.0
    started: bool = False


def mppt_step(s: MpptState, v_pv: float, i_pv: float) -> MpptState:
    """One perturb-and-observe decision."""
    p = v_pv * i_pv
    if not s.started:
        direction = 1.0
    else:
        dp = p - s.last_power
        dv = v_pv - s.last_voltage
        moving_up = dv >= 0
        # power went up: keep going the same way, otherwise turn around
        direction = (1.0 if moving_up else -1.0) * (1.0 if dp > 0 else -1.0)
    v_ref = min(max(s.v_pv_ref + direction * s.step_size, 0.0), s.v_max)
    return replace(s, v_pv_ref=v_ref, last_power=p, last_voltage=v_pv, started=True)


@dataclass(frozen=True)
class VdcLoopState:
    v_ref: float = 400.0
    kp: float = 0.05
    ki: float = 5.0
    clamp: float = 20.0
    integral: float = 0.0  # volt-seconds
    id_ref: float = 0.0

    @property
    def integral_bound(self) -> float:
        return self.clamp / self.ki if self.ki > 0 else math.inf


def vdc_loop_step(s: VdcLoopState, v_dc: float, dt: float) -> VdcLoopState:
    """PI update of Id_ref; a DC link above its reference exports more current."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    err = v_dc - s.v_ref
    bound = s.integral_bound
    integral = min(max(s.integral + err * dt, -bound), bound)
    id_ref = min(max(s.kp * err + s.ki * integral, 0.0), s.clamp)
    return replace(s, integral=integral, id_ref=id_ref)


def warm_start(s: VdcLoopState, id_ref: float) -> VdcLoopState:
    """Preload the integrator so the loop starts at ``id_ref`` with zero error."""
    integral = min(max(id_ref / s.ki, -s.integral_bound), s.integral_bound)
    return replace(s, integral=integral, id_ref=min(max(s.ki * integral, 0.0), s.clamp))


def reference_current(id_ref: float, grid_phase: float, iq_ref: float = 0.0) -> float:
    """Alpha component of the inverse Park rotation of (id_ref, iq_ref).

    The d axis is aligned with the grid voltage v = V*sin(theta), so the
    alpha current is id*sin(theta) + iq*cos(theta).
    """
    return id_ref * math.sin(grid_phase) + iq_ref * math.cos(grid_phase)


@dataclass(frozen=True)
class HbccState:
    band_width: float = 0.4
    last_command: bool = True  # True: drive current up

    def __post_init__(self):
        if not self.band_width > 0:
            raise ValueError("band_width must be > 0")


def hbcc_step(s: HbccState, i_inv: float, i_ref: float, half_cycle_sign: int = 1):
    """Latching comparator.  Returns (state, active).

    Crossing the upper band latches drive-down, crossing the lower band
    latches drive-up; inside the band the previous command holds.  Driving
    up is the active state in the positive half-cycle and the freewheel
    state in the negative one.
    """
    h = s.band_width
    if i_inv >= i_ref + h:
        up = False
    elif i_inv <= i_ref - h:
        up = True
    else:
        up = s.last_command
    if up != s.last_command:
        s = HbccState(h, up)
    return s, (up if half_cycle_sign > 0 else not up)


def averaged_boost_current(p_pv: float, v_dc: float, efficiency: float = 1.0) -> float:
    """DC-link injection of an averaged boost stage delivering ``p_pv``."""
    if v_dc <= 0:
        return 0.0
    return efficiency * p_pv / v_dc
