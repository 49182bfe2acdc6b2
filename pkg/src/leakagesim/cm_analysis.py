"""Common-mode equivalent circuit of a transformerless single-phase bridge.

The two pole sources behind the filter inductors L_A and L_B reduce to a
single total common-mode source driving L_A || L_B in series with the PV
parasitic capacitance C_PV.  Reactances are evaluated at an explicit
analysis frequency; :func:`leakage_sweep` reports the estimate over a range
of frequencies instead of pretending one frequency is representative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .topology import PoleVoltages

#: Loop impedance magnitude (ohm) below which the estimate is reported as resonant.
RESONANCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CmDm:
    v_cm: float
    v_dm: float


@dataclass(frozen=True)
class CmEquivalentCircuit:
    l_a: float
    l_b: float
    c_pv: float
    frequency: float = 50.0

    def __post_init__(self):
        if not self.l_a > 0:
            raise ValueError(f"l_a must be > 0, got {self.l_a!r}")
        if not self.l_b >= 0:
            raise ValueError(f"l_b must be >= 0, got {self.l_b!r}")
        if not self.c_pv > 0:
            raise ValueError(f"c_pv must be > 0, got {self.c_pv!r}")
        if not self.frequency > 0:
            raise ValueError(f"frequency must be > 0, got {self.frequency!r}")

    @property
    def l_eq(self) -> float:
        """L_A || L_B; infinite L_B degenerates to L_A."""
        if math.isinf(self.l_b):
            return self.l_a
        return self.l_a * self.l_b / (self.l_a + self.l_b)

    def at(self, frequency: float) -> "CmEquivalentCircuit":
        return CmEquivalentCircuit(self.l_a, self.l_b, self.c_pv, frequency)


class _Resonant:
    """Sentinel returned when the CM loop impedance vanishes."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "RESONANT"

    def __reduce__(self):
        return (_Resonant, ())


RESONANT = _Resonant()


def decompose(p: PoleVoltages) -> CmDm:
    return CmDm(v_cm=0.5 * (p.v_an + p.v_bn), v_dm=p.v_an - p.v_bn)


def recompose(cd: CmDm) -> PoleVoltages:
    return PoleVoltages(v_an=cd.v_cm + 0.5 * cd.v_dm, v_bn=cd.v_cm - 0.5 * cd.v_dm)


def total_cmv(cd: CmDm, ckt: CmEquivalentCircuit) -> float:
    """Total CM source seen by the CM loop, including the DM share leaking
    through unequal filter inductors.  Equal inductors give exactly ``v_cm``.
    """
    l_sum = ckt.l_a + ckt.l_b
    if not l_sum > 0:
        raise ValueError("l_a + l_b must be positive")
    return cd.v_cm + 0.5 * cd.v_dm * (ckt.l_b - ckt.l_a) / l_sum


def loop_impedance(ckt: CmEquivalentCircuit) -> complex:
    """Series CM loop impedance j*w*L_eq + 1/(j*w*C_PV)."""
    w = 2 * math.pi * ckt.frequency
    return 1j * (w * ckt.l_eq - 1.0 / (w * ckt.c_pv))


def leakage_phasor(v_tcm: float, ckt: CmEquivalentCircuit):
    """Magnitude of the CM current driven by a ``v_tcm`` source at
    ``ckt.frequency``, or :data:`RESONANT` when the loop impedance is below
    :data:`RESONANCE_TOLERANCE`.
    """
    z = abs(loop_impedance(ckt))
    if z < RESONANCE_TOLERANCE:
        return RESONANT
    return abs(v_tcm) / z


def resonant_frequency(ckt: CmEquivalentCircuit) -> float:
    l_eq = ckt.l_eq
    if not (l_eq > 0 and ckt.c_pv > 0):
        raise ValueError("resonant frequency needs positive L_eq and C_PV")
    return math.sqrt(1.0 / (l_eq * ckt.c_pv)) / (2 * math.pi)


def leakage_sweep(v_tcm: float, ckt: CmEquivalentCircuit, frequencies: Iterable[float]):
    """(frequency, |I_CM|) pairs; resonant points carry :data:`RESONANT`."""
    return [(float(f), leakage_phasor(v_tcm, ckt.at(f))) for f in frequencies]


def cm_spectrum_leakage(v_tcm: np.ndarray, dt: float, ckt: CmEquivalentCircuit) -> np.ndarray:
    """Per-bin leakage current amplitude for a sampled V_tCM waveform.

    Each one-sided DFT bin of the AC part of ``v_tcm`` is divided by the CM
    loop impedance at that bin frequency.  A constant waveform has no AC part
    and gives zero at every bin.
    """
    x = np.asarray(v_tcm, dtype=float)
    n = x.size
    if np.ptp(x) == 0.0:
        return np.zeros(n // 2 + 1)
    spectrum = np.fft.rfft(x - x.mean()) / n
    amp = np.abs(spectrum)
    amp[1:] *= 2.0
    freqs = np.fft.rfftfreq(n, dt)
    out = np.zeros_like(amp)
    w = 2 * math.pi * freqs[1:]
    z = np.abs(w * ckt.l_eq - 1.0 / (w * ckt.c_pv))
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.where(z < RESONANCE_TOLERANCE, np.inf, amp[1:] / z)
    # amplitude exactly zero stays zero even at resonance
    out[1:][amp[1:] == 0.0] = 0.0
    return out
