"""Fixed-step time-domain model of the inverter output stage.

Network (sign conventions used throughout):

* ``v_cpv`` is the voltage across C_PV, DC negative rail N with respect to
  earth.  The CM current ``i_cm = i_la + i_lb`` leaves the bridge through
  the filter inductors, returns through earth, the ground-path resistance
  R_g and C_PV into N, so that ``C_PV * dv_cpv/dt = -i_cm`` and the rail
  sits at ``V_N = v_cpv - R_g * i_cm``.
* ``i_la`` flows from pole A through L_A towards the grid phase, ``i_lb``
  from pole B through L_B into the earthed grid neutral::

      L_A di_la/dt = V_N + v_an - v_p - R_s i_la
      L_B di_lb/dt = V_N + v_bn     - R_s i_lb

  where ``v_p`` is the grid phase voltage, or the filter-capacitor voltage
  when the optional LCL extension (``c_filter``/``l_grid``) is enabled.
* The DC link integrates ``C_in dv_dc/dt = i_boost - i_inv`` with ``i_inv``
  the current drawn from the positive rail by the poles tied to it.

The linear part is advanced with the trapezoidal rule; switch states are
held constant over each step.
"""

from __future__ import annotations

import logging
import math
import time
from array import array
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Dict, NamedTuple, Optional

import numpy as np

from . import control
from .config import MAX_DT, SimConfig
from .metrics import TimeSeries
from .topology import OperatingMode, PoleVoltages, mode_from_command, pole_voltages, switch_vector

log = logging.getLogger(__name__)

#: Names of the series returned by :func:`run`, with units.
SERIES_UNITS = {
    "i_la": "A", "i_lb": "A", "i_cm": "A", "i_grid": "A", "v_cpv": "V",
    "v_an": "V", "v_bn": "V", "v_cm": "V", "v_dm": "V", "v_dc": "V",
    "v_grid": "V", "i_ref": "A", "id_ref": "A", "v_pv": "V",
    "mode": "", "switches": "",
}


class SimulationDiverged(RuntimeError):
    def __init__(self, message: str, snapshot: "CircuitState" = None):
        super().__init__(message)
        self.snapshot = snapshot


@dataclass(frozen=True)
class GridSource:
    v_rms: float = 220.0
    frequency: float = 50.0
    phase: float = 0.0

    def __post_init__(self):
        if not (self.v_rms > 0 and self.frequency > 0):
            raise ValueError("grid v_rms and frequency must be positive")

    def angle(self, t: float) -> float:
        return 2 * math.pi * self.frequency * t + self.phase

    def voltage(self, t: float) -> float:
        return math.sqrt(2) * self.v_rms * math.sin(self.angle(t))

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "GridSource":
        return cls(cfg.v_grid_rms, cfg.grid_freq, cfg.grid_phase)


@dataclass(frozen=True)
class CircuitState:
    i_la: float = 0.0
    i_lb: float = 0.0
    v_cpv: float = 0.0
    v_dc: float = 400.0
    t: float = 0.0
    v_cf: float = 0.0
    i_g: float = 0.0
    #: common pole potential applied while a plain-H5 bridge floats
    v_hold: float = math.nan

    @property
    def i_cm(self) -> float:
        return self.i_la + self.i_lb

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.i_la, self.i_lb, self.v_cpv, self.v_dc,
                                               self.t, self.v_cf, self.i_g))


class StateRates(NamedTuple):
    di_la: float
    di_lb: float
    dv_cpv: float
    dv_dc: float
    dv_cf: float = 0.0
    di_g: float = 0.0


def resolve_poles(poles: PoleVoltages, state: CircuitState) -> PoleVoltages:
    """Replace a floating pole pair by the potential held since decoupling."""
    if not poles.floating:
        return poles
    hold = state.v_hold if math.isfinite(state.v_hold) else 0.5 * state.v_dc
    return PoleVoltages(hold, hold)


def dc_link_current(poles: PoleVoltages, state: CircuitState) -> float:
    """Current drawn from the positive rail: poles sitting at v_dc carry
    their inductor current; clamped or decoupled poles draw nothing."""
    if poles.floating:
        return 0.0
    tol = 1e-9 * max(1.0, abs(state.v_dc))
    i = 0.0
    if abs(poles.v_an - state.v_dc) <= tol:
        i += state.i_la
    if abs(poles.v_bn - state.v_dc) <= tol:
        i += state.i_lb
    return i


def derivatives(state: CircuitState, poles: PoleVoltages, v_grid: float, params: SimConfig,
                i_boost: float = 0.0) -> StateRates:
    """Right-hand side of the output-stage ODE (see module docstring)."""
    poles = resolve_poles(poles, state)
    i_cm = state.i_la + state.i_lb
    v_n = state.v_cpv - params.r_ground * i_cm
    v_p = state.v_cf if params.lcl else v_grid
    di_la = (v_n + poles.v_an - v_p - params.r_s * state.i_la) / params.l_a
    di_lb = (v_n + poles.v_bn - params.r_s * state.i_lb) / params.l_b
    dv_cpv = -i_cm / params.c_pv
    if params.dc_source == "ideal":
        dv_dc = 0.0
    else:
        dv_dc = (i_boost - dc_link_current(poles, state)) / params.c_in
    if params.lcl:
        dv_cf = (state.i_la - state.i_g) / params.c_filter
        di_g = (state.v_cf - v_grid - params.r_s * state.i_g) / params.l_grid
        return StateRates(di_la, di_lb, dv_cpv, dv_dc, dv_cf, di_g)
    return StateRates(di_la, di_lb, dv_cpv, dv_dc)


def state_matrices(params: SimConfig):
    """(A, B) of the linear network, x = [i_la, i_lb, v_cpv(, v_cf, i_g)],
    u = [v_an, v_bn, v_grid]."""
    la, lb, rs, rg = params.l_a, params.l_b, params.r_s, params.r_ground
    n = 5 if params.lcl else 3
    a = np.zeros((n, n))
    b = np.zeros((n, 3))
    a[0, :3] = [-(rs + rg) / la, -rg / la, 1 / la]
    a[1, :3] = [-rg / lb, -(rs + rg) / lb, 1 / lb]
    a[2, :2] = [-1 / params.c_pv, -1 / params.c_pv]
    b[0, 0] = 1 / la
    b[1, 1] = 1 / lb
    if params.lcl:
        a[0, 3] = -1 / la
        a[3, 0] = 1 / params.c_filter
        a[3, 4] = -1 / params.c_filter
        a[4, 3] = 1 / params.l_grid
        a[4, 4] = -rs / params.l_grid
        b[4, 2] = -1 / params.l_grid
    else:
        b[0, 2] = -1 / la
    return a, b


class OutputStage:
    """Trapezoidal propagator x1 = P x0 + Qp (2 u_poles) + Qg (vg0 + vg1)."""

    def __init__(self, params: SimConfig, dt: float):
        if not 0 < dt <= MAX_DT * (1 + 1e-12):
            raise ValueError(f"dt must lie in (0, {MAX_DT:g}] s, got {dt!r}")
        self.params = params
        self.dt = dt
        a, b = state_matrices(params)
        n = a.shape[0]
        lhs = np.eye(n) - 0.5 * dt * a
        p = np.linalg.solve(lhs, np.eye(n) + 0.5 * dt * a)
        q = np.linalg.solve(lhs, 0.5 * dt * b)
        self.n = n
        self.P = p
        self.Q = q
        self._rows = tuple(
            (tuple(p[r].tolist()), 2.0 * float(q[r, 0]), 2.0 * float(q[r, 1]), float(q[r, 2])) for r in range(n))

    def advance(self, x, v_an: float, v_bn: float, vg0: float, vg1: float):
        return [sum(pr * xi for pr, xi in zip(prow, x)) + qa * v_an + qb * v_bn + qg * (vg0 + vg1)
                for prow, qa, qb, qg in self._rows]


@lru_cache(maxsize=16)
def _stage(params: SimConfig, dt: float) -> OutputStage:
    return OutputStage(params, dt)


def step(state: CircuitState, poles: PoleVoltages, grid: GridSource, params: SimConfig,
         dt: float, i_boost: float = 0.0) -> CircuitState:
    """Advance ``state`` by one step with ``poles`` held over the step."""
    stage = _stage(params, dt)
    applied = resolve_poles(poles, state)
    x0 = [state.i_la, state.i_lb, state.v_cpv]
    if params.lcl:
        x0 += [state.v_cf, state.i_g]
    x1 = stage.advance(x0, applied.v_an, applied.v_bn, grid.voltage(state.t),
                       grid.voltage(state.t + dt))
    v_dc = state.v_dc
    if params.dc_source != "ideal":
        i0 = dc_link_current(poles, state)
        i1 = dc_link_current(poles, replace(state, i_la=x1[0], i_lb=x1[1]))
        v_dc = v_dc + dt / params.c_in * (i_boost - 0.5 * (i0 + i1))
    hold = state.v_hold if poles.floating else 0.5 * (applied.v_an + applied.v_bn)
    new = CircuitState(x1[0], x1[1], x1[2], v_dc, state.t + dt,
                       x1[3] if params.lcl else 0.0, x1[4] if params.lcl else 0.0, hold)
    if not new.is_finite() or new.v_dc < 0:
        raise SimulationDiverged(f"state became invalid at t={new.t:.9g} s", snapshot=state)
    return new


def initial_state(params: SimConfig) -> CircuitState:
    """Periodic CM steady state at t=0 with zero DM current: C_PV follows
    half the grid voltage below the DC-link midpoint."""
    grid = GridSource.from_config(params)
    vpk = math.sqrt(2) * params.v_grid_rms
    v_dc = params.v_dc_ref
    v_cpv = 0.5 * grid.voltage(0.0) - 0.5 * v_dc
    i_cm = -params.c_pv * 0.5 * vpk * params.omega * math.cos(params.grid_phase)
    i_g = 0.0
    return CircuitState(i_la=0.5 * i_cm, i_lb=0.5 * i_cm, v_cpv=v_cpv, v_dc=v_dc, t=0.0,
                        v_cf=grid.voltage(0.0) if params.lcl else 0.0, i_g=i_g,
                        v_hold=0.5 * v_dc)


@dataclass
class SimResult:
    config: SimConfig
    series: Dict[str, TimeSeries]
    switch_events: int = 0
    final_state: Optional[CircuitState] = None
    info: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> TimeSeries:
        return self.series[name]

    @property
    def mean_switching_frequency(self) -> float:
        """Average number of mode changes per second (both edges counted)."""
        d = self.series["mode"].duration
        return self.switch_events / d if d > 0 else 0.0


def run(config: SimConfig, duration: float = None, *, state: CircuitState = None,
        force_mode: OperatingMode = None) -> SimResult:
    """Simulate ``duration`` seconds (default ``config.duration``).

    Returns one :class:`TimeSeries` per entry of :data:`SERIES_UNITS`, each
    with ``round(duration/dt) + 1`` samples.  Sample k holds the state at
    ``t = k*dt`` and the pole voltages applied over the following step.
    ``force_mode`` bypasses the current controller (open-loop studies).
    Deterministic: identical inputs give bit-identical series.
    """
    wall_start = time.perf_counter()
    cfg = config
    duration = cfg.duration if duration is None else duration
    if not duration > 0:
        raise ValueError("duration must be > 0")
    dt = cfg.dt
    n_steps = int(round(duration / dt))
    stage = _stage(cfg, dt)
    kind = cfg.topology
    st = state or initial_state(cfg)

    # per-mode pole coefficients (pole = coef * v_dc), switch bits, DC-link shares
    table = []
    for mode in OperatingMode:
        pv = pole_voltages(kind, mode, 1.0)
        sw = switch_vector(kind, mode)
        share_a = 1.0 if (not pv.floating and pv.v_an == 1.0) else 0.0
        share_b = 1.0 if (not pv.floating and pv.v_bn == 1.0) else 0.0
        table.append((pv.v_an, pv.v_bn, pv.floating, sw.as_bits(), share_a, share_b))

    vpk = math.sqrt(2) * cfg.v_grid_rms
    w = cfg.omega
    ph = cfg.grid_phase
    ideal_dc = cfg.dc_source == "ideal"
    n_carrier = max(1, int(round(1.0 / (cfg.f_mppt * dt))))
    t_carrier = n_carrier * dt
    n_mppt = max(n_carrier, int(round(1.0 / (cfg.mppt_rate * dt))))
    lcl = cfg.lcl
    c_in = cfg.c_in

    panel = control.PvPanel(cfg.pv_voc, cfg.pv_isc, cfg.p_out_nominal)
    m_exp = panel.exponent
    mppt = control.MpptState(v_pv_ref=cfg.mppt_v_init, step_size=cfg.mppt_step, v_max=cfg.pv_voc)
    v_pv = mppt.v_pv_ref
    i_pv = panel.current(v_pv, m_exp)
    loop = control.VdcLoopState(cfg.v_dc_ref, cfg.pi_kp, cfg.pi_ki, cfg.pi_clamp)
    # losses are small against the nominal export; start the integrator there
    loop = control.warm_start(loop, cfg.i_peak_nominal)
    id_ref = loop.id_ref
    hb = control.HbccState(cfg.hbcc_band, True)

    x = [st.i_la, st.i_lb, st.v_cpv] + ([st.v_cf, st.i_g] if lcl else [])
    v_dc = st.v_dc
    v_hold = st.v_hold if math.isfinite(st.v_hold) else 0.5 * v_dc
    t_start = st.t
    i_boost = 0.0

    rec = {name: array("d") for name in SERIES_UNITS if name not in ("mode", "switches")}
    rec_mode = array("b")
    rec_sw = array("b")
    r_i_la, r_i_lb, r_v_cpv, r_v_dc = rec["i_la"].append, rec["i_lb"].append, rec["v_cpv"].append, rec["v_dc"].append
    r_v_an, r_v_bn, r_v_grid, r_i_ref = rec["v_an"].append, rec["v_bn"].append, rec["v_grid"].append, rec["i_ref"].append
    r_id_ref, r_v_pv, r_i_grid = rec["id_ref"].append, rec["v_pv"].append, rec["i_grid"].append
    hbcc_step = control.hbcc_step
    sin = math.sin
    isfinite = math.isfinite
    advance = stage.advance
    forced = None if force_mode is None else OperatingMode(force_mode)

    last_mode = None
    switch_events = 0
    vg = vpk * sin(w * t_start + ph)
    for k in range(n_steps + 1):
        t = t_start + k * dt
        s_th = sin(w * t + ph)
        if k % n_carrier == 0:
            if not ideal_dc:
                if k > 0 and k % n_mppt == 0:
                    mppt = control.mppt_step(mppt, v_pv, i_pv)
                    v_pv = mppt.v_pv_ref
                    i_pv = panel.current(v_pv, m_exp)
                if k > 0:
                    loop = control.vdc_loop_step(loop, v_dc, t_carrier)
                    id_ref = loop.id_ref
                i_boost = v_pv * i_pv / v_dc
        i_ref = id_ref * s_th
        sign = 1 if s_th >= 0.0 else -1
        if forced is None:
            hb, active = hbcc_step(hb, 0.5 * (x[0] - x[1]), i_ref, sign)
            mode = (0 if active else 1) if sign > 0 else (2 if active else 3)
        else:
            mode = int(forced)
        ca, cb, floating, bits, sa, sb = table[mode]
        if floating:
            v_an = v_bn = v_hold
        else:
            v_an = ca * v_dc
            v_bn = cb * v_dc
            v_hold = 0.5 * (v_an + v_bn)
        if mode != last_mode:
            if last_mode is not None:
                switch_events += 1
            last_mode = mode

        r_i_la(x[0]); r_i_lb(x[1]); r_v_cpv(x[2]); r_v_dc(v_dc)
        r_v_an(v_an); r_v_bn(v_bn); r_v_grid(vg); r_i_ref(i_ref)
        r_id_ref(id_ref); r_v_pv(v_pv); r_i_grid(x[4] if lcl else x[0])
        rec_mode.append(mode); rec_sw.append(bits)
        if k == n_steps:
            break

        vg1 = vpk * sin(w * (t + dt) + ph)
        i0 = sa * x[0] + sb * x[1]
        x_prev, v_dc_prev = x, v_dc
        x = advance(x, v_an, v_bn, vg, vg1)
        vg = vg1
        if not ideal_dc:
            v_dc += dt / c_in * (i_boost - 0.5 * (i0 + sa * x[0] + sb * x[1]))
        if not (isfinite(x[0]) and isfinite(x[1]) and isfinite(x[2]) and v_dc >= 0.0):
            snap = CircuitState(*x_prev[:3], v_dc_prev, t, v_hold=v_hold)
            raise SimulationDiverged(f"integration diverged at t={t + dt:.9g} s", snapshot=snap)

    final = CircuitState(x[0], x[1], x[2], v_dc, t_start + n_steps * dt,
                         x[3] if lcl else 0.0, x[4] if lcl else 0.0, v_hold)
    arrays = {name: np.frombuffer(buf, dtype=float).copy() for name, buf in rec.items()}
    arrays["i_cm"] = arrays["i_la"] + arrays["i_lb"]
    arrays["v_cm"] = 0.5 * (arrays["v_an"] + arrays["v_bn"])
    arrays["v_dm"] = arrays["v_an"] - arrays["v_bn"]
    arrays["mode"] = np.frombuffer(rec_mode, dtype=np.int8).astype(float)
    arrays["switches"] = np.frombuffer(rec_sw, dtype=np.int8).astype(float)
    series = {name: TimeSeries(name, dt, arrays[name], SERIES_UNITS[name], t_start)
              for name in SERIES_UNITS}
    log.debug("%s: %d steps, %d mode changes", kind.value, n_steps, switch_events)
    return SimResult(cfg, series, switch_events, final,
                     info={"n_steps": n_steps, "mppt_v_final": v_pv, "id_ref_final": id_ref,
                           "wall_time": time.perf_counter() - wall_start})
