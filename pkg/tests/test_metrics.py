import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from leakagesim.metrics import (
    ComplianceReport, MetricError, TimeSeries, cmv_flatness, displacement_pf, dmv_levels, rms,
    sliding_rms, thd, vde_check,
)

DT = 1e-5
F = 50.0


def sine(amp=1.0, periods=10, phase=0.0, t_start=0.0, name="x"):
    n = int(round(periods / F / DT)) + 1
    t = np.arange(n) * DT
    x = amp * np.sin(2 * math.pi * F * t + phase) * (t >= t_start)
    return TimeSeries(name, DT, x)


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries("x", 0.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        TimeSeries("x", 1.0, [1.0])
    with pytest.raises(ValueError):
        TimeSeries("x", 1.0, [1.0, math.nan])


def test_rms_constant_and_sine():
    assert rms(TimeSeries("c", DT, np.full(1000, 2.0))) == pytest.approx(2.0, rel=1e-12)
    s = sine(amp=3.0, periods=4)
    assert rms(s, window=(0.0, 0.08 - DT)) == pytest.approx(3.0 / math.sqrt(2), rel=1e-3)


def test_rms_window_longer_than_series():
    with pytest.raises(MetricError):
        rms(sine(periods=1), window=(0.0, 1.0))


@given(st.floats(-100, 100).filter(lambda a: a == 0 or abs(a) > 1e-100))
def test_rms_scale_equivariant(alpha):
    s = sine(periods=2)
    assert rms(s.scaled(alpha)) == pytest.approx(abs(alpha) * rms(s), rel=1e-12)


def square_thd_oracle(k_max):
    return math.sqrt(sum(1.0 / k ** 2 for k in range(3, k_max + 1, 2)))


def test_thd_pure_sine():
    assert thd(sine(periods=6), F) < 1e-3


@pytest.mark.parametrize("k_max", [25, 49])
def test_thd_square_wave(k_max):
    n = 10 * 2000
    t = (np.arange(n) + 0.5) * DT
    sq = np.sign(np.sin(2 * math.pi * F * t))
    got = thd(TimeSeries("sq", DT, sq), F, k_max)
    assert got == pytest.approx(square_thd_oracle(k_max), abs=1e-3)
    assert got < math.sqrt(math.pi ** 2 / 8 - 1)  # infinite-series limit 0.483


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 100), st.floats(-math.pi, math.pi))
def test_thd_invariant_under_scale_and_phase(amp, phase):
    t = np.arange(6 * 2000) * DT
    w = 2 * math.pi * F
    base = np.sin(w * t) + 0.1 * np.sin(3 * w * t) + 0.05 * np.sin(5 * w * t + 1)
    moved = amp * (np.sin(w * t + phase) + 0.1 * np.sin(3 * (w * t + phase)) + 0.05 * np.sin(5 * (w * t + phase) + 1))
    assert thd(TimeSeries("a", DT, moved), F) == pytest.approx(thd(TimeSeries("b", DT, base), F), rel=1e-6)


def test_thd_needs_five_periods():
    with pytest.raises(MetricError):
        thd(sine(periods=3), F)


def test_thd_zero_fundamental():
    t = np.arange(6 * 2000) * DT
    with pytest.raises(MetricError, match="noise floor"):
        thd(TimeSeries("h3", DT, np.sin(3 * 2 * math.pi * F * t)), F)


def test_displacement_pf():
    v = sine(periods=5)
    assert displacement_pf(v, v, F) == pytest.approx(1.0, abs=1e-12)
    i = sine(periods=5, phase=-math.pi / 2)
    assert displacement_pf(v, i, F) == pytest.approx(0.0, abs=1e-9)
    i = sine(periods=5, phase=-math.pi / 3, amp=7.0)
    assert displacement_pf(v, i, F) == pytest.approx(0.5, abs=1e-9)


def test_displacement_pf_degenerate():
    v = sine(periods=5)
    with pytest.raises(MetricError):
        displacement_pf(v, TimeSeries("z", DT, np.zeros(len(v))), F)


def test_cmv_flatness_constant():
    assert cmv_flatness(TimeSeries("v", DT, np.full(100, 200.0)), 400.0, blanking=0.0) == (0.0, 0)


def test_cmv_flatness_single_excursion():
    x = np.full(100, 200.0)
    x[40:45] = 240.0
    assert cmv_flatness(TimeSeries("v", DT, x), 400.0, blanking=0.0) == (40.0, 1)


def test_cmv_flatness_blanking_and_dwell():
    x = np.full(1000, 200.0)
    x[10:20] = 300.0            # blanked
    x[500] = 230.0              # one-sample blip: deviation counted, not a spike
    dev, spikes = cmv_flatness(TimeSeries("v", DT, x), 400.0, blanking=100 * DT)
    assert (dev, spikes) == (30.0, 0)


def test_vde_quiet_series_not_tripped():
    rep = vde_check(TimeSeries("i", 1e-5, np.zeros(50001)))
    assert not rep.tripped and rep.trip_time is None


@pytest.mark.parametrize("amp", [0.5, 0.5 * math.sqrt(2)])
def test_vde_trips_on_synthetic_fault(amp):
    s = sine(amp=amp, periods=30, t_start=0.1)
    rep = vde_check(s)
    assert rep.tripped
    assert rep.trip_time <= 0.4
    assert rep.trip_time <= rep.detect_time + 0.3


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1.0, 3.0))
def test_vde_monotone(amp, factor):
    a = sine(amp=amp, periods=3)
    b = a.scaled(factor)
    if vde_check(a).tripped:
        assert vde_check(b).tripped


def test_compliance_report_invariant():
    with pytest.raises(ValueError):
        ComplianceReport(0.1, 0.2, tripped=True)
    with pytest.raises(ValueError):
        ComplianceReport(0.1, 0.2, tripped=False, trip_time=0.3)


def test_sliding_rms_matches_direct():
    rng = np.random.default_rng(0)
    s = TimeSeries("n", DT, rng.normal(size=500))
    n = 50
    direct = [math.sqrt(np.mean(s.samples[j:j + n] ** 2)) for j in range(500 - n + 1)]
    assert np.allclose(sliding_rms(s, n * DT), direct, rtol=1e-10)


def pwm_dm(levels, dwell=7, reps=40):
    seq = np.repeat(np.tile(levels, reps), dwell).astype(float)
    return TimeSeries("v_dm", DT, seq)


def test_dmv_levels_three_level():
    assert dmv_levels(pwm_dm([400, 0, -400, 0]), 400.0, 8.0) == (400.0, 0.0, -400.0)


def test_dmv_levels_two_level_and_constant():
    assert dmv_levels(pwm_dm([400, -400]), 400.0, 8.0) == (400.0, -400.0)
    assert dmv_levels(TimeSeries("z", DT, np.zeros(50)), 400.0, 8.0) == (0.0,)


def test_dmv_levels_tolerates_ripple():
    s = pwm_dm([400, 0, -400, 0])
    ripple = 5.0 * np.sin(np.arange(len(s)) * 0.001)
    x = np.where(s.samples != 0, s.samples + np.sign(s.samples) * ripple, 0.0)
    assert dmv_levels(TimeSeries("r", DT, x), 400.0, 8.0) == (400.0, 0.0, -400.0)


def test_dmv_levels_unclassified_fraction():
    x = np.tile([400.0, 0.0], 100)  # every plateau is one sample long
    with pytest.raises(MetricError, match="unclassified"):
        dmv_levels(TimeSeries("c", DT, x), 400.0, 8.0)


def test_dmv_levels_off_grid_level_reported_raw():
    lv = dmv_levels(pwm_dm([400, 123.0]), 400.0, 8.0)
    assert lv == (400.0, 123.0)
