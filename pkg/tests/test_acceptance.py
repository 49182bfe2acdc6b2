"""Acceptance run: one verdict line per criterion, repeated in the pytest
terminal summary under "acceptance criteria"."""

import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from leakagesim import metrics
from leakagesim.circuit import CircuitState, run, step
from leakagesim.circuit import GridSource
from leakagesim.cm_analysis import (
    RESONANT, CmDm, CmEquivalentCircuit, decompose, leakage_phasor, recompose, resonant_frequency, total_cmv,
)
from leakagesim.config import SimConfig
from leakagesim.topology import OperatingMode, PoleVoltages, TopologyKind, pole_voltages

V_DC = 400.0


def test_criterion_01_hch5_mode_voltages(verdict):
    expected_dm = {
        OperatingMode.ACTIVE_POSITIVE: V_DC,
        OperatingMode.FREEWHEEL_POSITIVE: 0.0,
        OperatingMode.ACTIVE_NEGATIVE: -V_DC,
        OperatingMode.FREEWHEEL_NEGATIVE: 0.0,
    }
    rows = {m: decompose(pole_voltages(TopologyKind.HCH5_D2, m, V_DC)) for m in OperatingMode}
    ok = all(r.v_cm == V_DC / 2 and r.v_dm == expected_dm[m] for m, r in rows.items())
    detail = ", ".join(f"{m.name}=({r.v_cm:g},{r.v_dm:g})" for m, r in rows.items())
    verdict(1, "HCH5-D2 mode CM/DM voltages exact", ok, detail)


def test_criterion_02_leakage_comparison(verdict, hch5_run, h4_run):
    blank = hch5_run.config.blanking
    i_hch5 = metrics.rms(hch5_run["i_cm"].window(blank))
    i_h4 = metrics.rms(h4_run["i_cm"].window(blank))
    ratio = i_h4 / i_hch5
    wall = max(hch5_run.info["wall_time"], h4_run.info["wall_time"])
    ok = i_hch5 < 10e-3 and 0.100 <= i_h4 <= 0.600 and ratio >= 50 and wall < 60
    verdict(2, "leakage comparison at reference parameters", ok,
            f"HCH5-D2 {1e3 * i_hch5:.3f} mA, H4 unipolar {1e3 * i_h4:.1f} mA, ratio {ratio:.0f}x, "
            f"slowest run {wall:.1f} s")


def test_criterion_03_cmv_flatness(verdict, hch5_run):
    dev, spikes = metrics.cmv_flatness(hch5_run["v_cm"], V_DC, blanking=0.040)
    verdict(3, "HCH5-D2 CMV flatness after 40 ms", dev < 4.0,
            f"max |v_cm - 200 V| = {dev:.3f} V (spikes above 5%: {spikes})")


def test_criterion_04_dmv_unipolar(verdict, hch5_run):
    v_dm = hch5_run["v_dm"].window(hch5_run.config.blanking)
    try:
        levels = metrics.dmv_levels(v_dm, V_DC, tol=8.0, max_unclassified=0.01)
        ok, detail = levels == (400.0, 0.0, -400.0), f"levels {levels}"
    except metrics.MetricError as exc:
        ok, detail = False, str(exc)
    verdict(4, "HCH5-D2 DMV levels", ok, detail)


def test_criterion_05_dc_link(verdict, hch5_run):
    tail = hch5_run["v_dc"].tail(5 / hch5_run.config.grid_freq).samples
    dev = float(np.max(np.abs(tail - V_DC)))
    verdict(5, "DC-link regulation over last 5 cycles", dev < 8.0,
            f"max |v_dc - 400| = {dev:.2f} V, mean {tail.mean():.2f} V")


def test_criterion_06_power_quality(verdict, hch5_run):
    blank = hch5_run.config.blanking
    f = hch5_run.config.grid_freq
    i_g = hch5_run["i_grid"].window(blank)
    pf = metrics.displacement_pf(hch5_run["v_grid"].window(blank), i_g, f)
    thd = metrics.thd(i_g, f)
    verdict(6, "unity power factor and grid-current THD", pf > 0.99 and thd < 0.05,
            f"PF {pf:.5f}, THD {100 * thd:.2f}%")


def _ringing_peak(cfg, duration=0.01):
    start = CircuitState(0.0, 0.0, 0.0, V_DC, 0.0, v_hold=V_DC / 2)
    r = run(cfg, duration, state=start, force_mode=OperatingMode.FREEWHEEL_POSITIVE)
    v = r["v_cpv"].samples
    v = (v - v.mean()) * np.hanning(len(v))
    n = 16 * len(v)
    spectrum = np.abs(np.fft.rfft(v, n))
    freqs = np.fft.rfftfreq(n, cfg.dt)
    band = freqs > 1e3
    return float(freqs[band][np.argmax(spectrum[band])])


def _decimal_resonance(l_a, l_b, c):
    getcontext().prec = 40
    pi = Decimal("3.141592653589793238462643383279502884197")
    la, lb, c = Decimal(repr(l_a)), Decimal(repr(l_b)), Decimal(repr(c))
    l_eq = la * lb / (la + lb)
    return 1 / (2 * pi * (l_eq * c).sqrt())


def test_criterion_07_resonance(verdict):
    cfg = SimConfig(topology=TopologyKind.H5_PLAIN, r_s=0.0, r_ground=0.0, dc_source="ideal")
    ckt = CmEquivalentCircuit(cfg.l_a, cfg.l_b, cfg.c_pv)
    f0 = resonant_frequency(ckt)
    peak = _ringing_peak(cfg)
    oracle = _decimal_resonance(cfg.l_a, cfg.l_b, cfg.c_pv)
    same_6 = f"{f0:.6g}" == f"{float(oracle):.6g}"
    ok = abs(peak / f0 - 1) <= 0.02 and same_6 and round(f0 / 1e3, 1) == 22.8
    verdict(7, "floating-bridge ringing vs analytic resonance", ok,
            f"FFT peak {peak:.0f} Hz, analytic {f0:.6g} Hz, decimal oracle {float(oracle):.6g} Hz "
            f"({100 * (peak / f0 - 1):+.2f}%)")


def test_criterion_08_cm_oracles(verdict):
    rng = np.random.default_rng(20240608)
    n = 10_000
    failures = []
    for k in range(n):
        l = float(rng.uniform(1e-4, 1e-2))
        c = float(rng.uniform(1e-9, 1e-6))
        v_an, v_bn = (float(x) for x in rng.uniform(-800, 800, 2))
        cd = decompose(PoleVoltages(v_an, v_bn))
        # equal inductors: total CMV is the plain CMV, bit for bit
        if total_cmv(cd, CmEquivalentCircuit(l, l, c)) != cd.v_cm:
            failures.append(("equal-L", k))
        # bijection on dyadic grids (exact in binary floating point)
        a, b = (float(x) / 64 for x in rng.integers(-51200, 51200, 2))
        back = recompose(decompose(PoleVoltages(a, b)))
        if (back.v_an, back.v_bn) != (a, b):
            failures.append(("bijection", k))
        cm, dm = (float(x) / 64 for x in rng.integers(-51200, 51200, 2))
        if decompose(recompose(CmDm(cm, dm))) != CmDm(cm, dm):
            failures.append(("bijection-inv", k))
        # homogeneity of the leakage magnitude in the source voltage
        ckt = CmEquivalentCircuit(l, float(rng.uniform(1e-4, 1e-2)), c, float(rng.uniform(10, 1e5)))
        v = float(rng.uniform(0.1, 500))
        alpha = float(rng.uniform(-10, 10))
        i1, i2 = leakage_phasor(v, ckt), leakage_phasor(alpha * v, ckt)
        if i1 is not RESONANT and not math.isclose(i2, abs(alpha) * i1, rel_tol=1e-12):
            failures.append(("homogeneity", k))
        # resonance marker at the analytic frequency
        if leakage_phasor(v, ckt.at(resonant_frequency(ckt))) is not RESONANT:
            failures.append(("resonance", k))
    verdict(8, "CM/DM and leakage oracles over 10^4 random cases", not failures,
            f"{n} cases, {len(failures)} failures{'' if not failures else ' e.g. ' + str(failures[:3])}")


def test_criterion_09_vde(verdict, hch5_run):
    dt = 1e-5
    t = np.arange(int(0.6 / dt) + 1) * dt
    lines = []
    ok = True
    for label, amp in (("0.5 A RMS", 0.5 * math.sqrt(2)), ("0.5 A peak", 0.5)):
        i = amp * np.sin(2 * math.pi * 50 * t) * (t >= 0.1)
        rep = metrics.vde_check(metrics.TimeSeries("i_cm", dt, i))
        ok &= rep.tripped and rep.trip_time is not None and rep.trip_time <= 0.4
        lines.append(f"{label} trips at {rep.trip_time:.4f} s")
    quiet = metrics.vde_check(hch5_run["i_cm"].window(hch5_run.config.blanking))
    ok &= not quiet.tripped
    lines.append(f"HCH5-D2 run tripped={quiet.tripped} (worst 20 ms RMS {1e3 * quiet.max_window_rms:.2f} mA)")
    verdict(9, "VDE trip logic", ok, "; ".join(lines))


@pytest.mark.slow
def test_criterion_10_numerical_hygiene(verdict, headline):
    parts = []
    ok = True
    for kind in (TopologyKind.HCH5_D2, TopologyKind.H4_UNIPOLAR):
        coarse = headline(SimConfig(topology=kind, dt=1e-6))
        fine = headline(SimConfig(topology=kind, dt=0.5e-6))
        keys = ("leakage_rms", "cmv_max_deviation") if kind is TopologyKind.HCH5_D2 else ("leakage_rms",)
        for key in keys:
            change = abs(fine[key] / coarse[key] - 1)
            ok &= change < 0.01
            parts.append(f"{kind.value} {key} {100 * change:.2f}%")

    cfg = SimConfig(r_s=0.0, r_ground=0.0, dc_source="ideal")
    quiet = GridSource(1e-300, 50.0)
    s = CircuitState(1.0, 1.0, 100.0, V_DC)

    def energy(x):
        return 0.5 * cfg.l_a * x.i_la ** 2 + 0.5 * cfg.l_b * x.i_lb ** 2 + 0.5 * cfg.c_pv * x.v_cpv ** 2

    e0 = energy(s)
    for _ in range(1000):
        s = step(s, PoleVoltages(0.0, 0.0), quiet, cfg, cfg.dt)
    drift = abs(energy(s) / e0 - 1)
    ok &= drift < 1e-3
    parts.append(f"LC energy drift {100 * drift:.2e}% per 1000 steps")
    verdict(10, "dt halving and energy conservation", ok, ", ".join(parts))
