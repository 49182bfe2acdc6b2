"""Waveform post-processing: RMS, THD, power factor, CMV flatness, DMV
level detection and the VDE 0126-1-1 leakage trip check."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

#: VDE 0126-1-1 residual current limit (A) and maximum disconnection time (s).
VDE_LIMIT = 0.300
VDE_BREAK_TIME = 0.3


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled waveform; sample k sits at ``t0 + k*dt``."""

    name: str
    dt: float
    samples: np.ndarray
    unit: str = ""
    t0: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if not self.dt > 0:
            raise ValueError(f"{self.name}: dt must be > 0")
        if arr.ndim != 1 or arr.size < 2:
            raise ValueError(f"{self.name}: need a 1-D series with at least 2 samples")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"{self.name}: non-finite samples")
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.name == other.name and self.dt == other.dt and self.unit == other.unit
                and self.t0 == other.t0 and np.array_equal(self.samples, other.samples))

    @property
    def duration(self) -> float:
        return (self.samples.size - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def index_at(self, t: float) -> int:
        return int(round((t - self.t0) / self.dt))

    def window(self, start: float = None, stop: float = None) -> "TimeSeries":
        """Samples with ``start <= t <= stop`` (times relative to the series clock)."""
        i0 = 0 if start is None else max(0, self.index_at(start))
        i1 = self.samples.size if stop is None else min(self.samples.size, self.index_at(stop) + 1)
        if i1 - i0 < 2:
            raise MetricError(f"{self.name}: window [{start}, {stop}] holds fewer than 2 samples")
        return TimeSeries(self.name, self.dt, self.samples[i0:i1], self.unit, self.t0 + i0 * self.dt)

    def tail(self, seconds: float) -> "TimeSeries":
        return self.window(start=self.t0 + self.duration - seconds)

    def decimate(self, n: int) -> "TimeSeries":
        if n < 1:
            raise ValueError("decimation factor must be >= 1")
        if n == 1:
            return self
        return TimeSeries(self.name, self.dt * n, self.samples[::n], self.unit, self.t0)

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.name, self.dt, self.samples * factor, self.unit, self.t0)


@dataclass(frozen=True)
class ComplianceReport:
    rms_leakage: float
    peak_leakage: float
    tripped: bool
    trip_time: Optional[float] = None
    detect_time: Optional[float] = None
    max_window_rms: float = 0.0

    def __post_init__(self):
        if self.tripped != (self.trip_time is not None):
            raise ValueError("trip_time must be given exactly when tripped")


def rms(series: TimeSeries, window: Optional[Sequence[float]] = None) -> float:
    """RMS over the whole series, or over ``window=(start, stop)``."""
    if window is not None:
        start, stop = window
        if stop - start > series.duration + series.dt / 2:
            raise MetricError(f"{series.name}: window longer than the series")
        series = series.window(start, stop)
    x = series.samples
    if x.size == 0:
        raise MetricError("empty window")
    return float(math.sqrt(np.mean(x * x)))


def sliding_rms(series: TimeSeries, window: float) -> np.ndarray:
    """Trailing-window RMS; entry j covers samples j .. j+n-1 (n = window/dt)."""
    n = int(round(window / series.dt))
    if n < 1 or n > series.samples.size:
        raise MetricError(f"{series.name}: sliding window of {window} s does not fit")
    sq = np.concatenate(([0.0], np.cumsum(series.samples ** 2)))
    ms = (sq[n:] - sq[:-n]) / n
    return np.sqrt(np.maximum(ms, 0.0))


def _whole_periods(series: TimeSeries, fundamental: float, min_periods: int) -> np.ndarray:
    per = 1.0 / (fundamental * series.dt)
    n_periods = int(math.floor(series.samples.size / per + 1e-9))
    if n_periods < min_periods:
        raise MetricError(
            f"{series.name}: spans {series.samples.size / per:.2f} fundamental periods, "
            f"need at least {min_periods}")
    n = int(round(n_periods * per))
    return series.samples[-n:]


def harmonic_phasors(series: TimeSeries, fundamental: float, harmonics: Sequence[int],
                     min_periods: int = 1) -> np.ndarray:
    """Complex amplitudes of the given harmonics over the last whole number
    of fundamental periods (single-bin DFT at the exact harmonic frequency)."""
    x = _whole_periods(series, fundamental, min_periods)
    t = np.arange(x.size) * series.dt
    out = np.empty(len(harmonics), dtype=complex)
    for j, k in enumerate(harmonics):
        out[j] = 2.0 / x.size * np.dot(x, np.exp(-2j * math.pi * k * fundamental * t))
    return out


def thd(series: TimeSeries, fundamental: float, max_harmonic: int = 40) -> float:
    """sqrt(sum_{k=2..K} |H_k|^2) / |H_1| over whole fundamental periods."""
    if max_harmonic < 2:
        raise ValueError("max_harmonic must be >= 2")
    h = harmonic_phasors(series, fundamental, range(1, max_harmonic + 1), min_periods=5)
    floor = 1e-9 * max(1.0, float(np.max(np.abs(series.samples))))
    if abs(h[0]) <= floor:
        raise MetricError(f"{series.name}: fundamental below noise floor")
    return float(np.sqrt(np.sum(np.abs(h[1:]) ** 2)) / abs(h[0]))


def displacement_pf(v: TimeSeries, i: TimeSeries, fundamental: float) -> float:
    """cos of the angle between the fundamental phasors of ``v`` and ``i``."""
    if len(v) != len(i) or v.dt != i.dt:
        raise MetricError("voltage and current must share sampling")
    hv = harmonic_phasors(v, fundamental, [1])[0]
    hi = harmonic_phasors(i, fundamental, [1])[0]
    if abs(hv) == 0.0 or abs(hi) == 0.0:
        raise MetricError("zero-magnitude fundamental")
    return float(math.cos(np.angle(hv) - np.angle(hi)))


def _runs(mask: np.ndarray):
    """(start, stop) index pairs of consecutive True runs."""
    if mask.size == 0:
        return np.empty((0, 2), dtype=int)
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    return np.column_stack((np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def cmv_flatness(v_cm: TimeSeries, v_dc_nominal: float, blanking: float = 0.04,
                 spike_threshold: Optional[float] = None, min_dwell: int = 2):
    """(max |v_cm - v_dc/2|, spike count) after ``blanking`` seconds.

    A spike is a run of at least ``min_dwell`` samples deviating more than
    ``spike_threshold`` (default 5 % of the nominal DC voltage).
    """
    if spike_threshold is None:
        spike_threshold = 0.05 * v_dc_nominal
    x = v_cm.samples[v_cm.times >= v_cm.t0 + blanking - v_cm.dt / 2]
    if x.size == 0:
        raise MetricError(f"{v_cm.name}: nothing left after {blanking} s blanking")
    dev = np.abs(x - 0.5 * v_dc_nominal)
    runs = _runs(dev > spike_threshold)
    spikes = int(np.count_nonzero(runs[:, 1] - runs[:, 0] >= min_dwell))
    return float(dev.max()), spikes


def vde_check(i_cm: TimeSeries, window: float = 0.020, limit: float = VDE_LIMIT,
              break_time: float = VDE_BREAK_TIME) -> ComplianceReport:
    """Sliding-window RMS trip check.

    The first window whose RMS exceeds ``limit`` marks the fault; its start is
    taken as the fault onset and the break must happen ``break_time`` later.
    """
    w = min(window, i_cm.duration)
    srms = sliding_rms(i_cm, w)
    above = np.flatnonzero(srms > limit)
    common = dict(rms_leakage=rms(i_cm), peak_leakage=float(np.max(np.abs(i_cm.samples))),
                  max_window_rms=float(srms.max()))
    if above.size == 0:
        return ComplianceReport(tripped=False, **common)
    j = int(above[0])
    n = int(round(w / i_cm.dt))
    onset = i_cm.t0 + j * i_cm.dt
    return ComplianceReport(tripped=True, trip_time=onset + break_time,
                            detect_time=i_cm.t0 + (j + n - 1) * i_cm.dt, **common)


def dmv_levels(v_dm: TimeSeries, v_dc: float, tol: float, min_dwell: int = 2,
               max_unclassified: float = 0.01):
    """Plateau levels of a switched DM voltage, sorted descending.

    Samples are split into plateaus (runs staying within ``tol`` of their
    first sample); runs shorter than ``min_dwell`` count as transitions.
    Plateau means are clustered within ``tol`` and each cluster is reported
    as the nearest multiple of ``v_dc/2`` when within ``tol`` of it,
    otherwise as the cluster mean.  Raises :class:`MetricError` when more
    than ``max_unclassified`` of the samples fall outside any plateau.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    x = v_dm.samples
    n = x.size
    # plateau boundaries: start a new run whenever a sample leaves the band
    # around the current run's first sample
    starts = [0]
    ref = x[0]
    for k in np.flatnonzero(np.abs(np.diff(x)) > 0) + 1:
        if abs(x[k] - ref) > tol:
            starts.append(int(k))
            ref = x[k]
    bounds = np.append(starts, n)
    means, weights = [], []
    unclassified = 0
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < min_dwell:
            unclassified += b - a
            continue
        means.append(float(x[a:b].mean()))
        weights.append(b - a)
    if unclassified > max_unclassified * n:
        raise MetricError(f"{v_dm.name}: {unclassified / n:.2%} of samples unclassified")
    clusters: list = []
    for m, w in sorted(zip(means, weights)):
        if clusters and m - clusters[-1][0] <= tol:
            c, cw = clusters[-1]
            clusters[-1] = ((c * cw + m * w) / (cw + w), cw + w)
        else:
            clusters.append((m, w))
    half = 0.5 * v_dc
    levels = []
    for c, _ in clusters:
        nominal = round(c / half) * half
        levels.append(float(nominal) + 0.0 if abs(c - nominal) <= tol else c)
    return tuple(sorted(set(levels), reverse=True))
