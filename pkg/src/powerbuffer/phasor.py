"""Phasor arithmetic and the impedance relations of the buffer-load combination.

Phasors are plain Python ``complex`` values (RMS magnitude). The buffer-load
impedance is kept in admittance-friendly form: the parallel reactance is
stored as a susceptance so that unity power factor (infinite reactance) is an
exact zero instead of a large sentinel.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCircuitError, DomainError

MAINS_OMEGA_50HZ = 2.0 * math.pi * 50.0

# Fortescue operator, 1 at +120 degrees
A_OP = cmath.exp(2j * math.pi / 3)


@dataclass(frozen=True)
class SequenceVoltage:
    """Positive and negative sequence components in per-unit of ``base_voltage``.

    ``base_voltage`` is an RMS quantity; the zero sequence is not carried
    since the buffer is fed from a three-wire supply.
    """

    pos_mag: float
    pos_angle: float = 0.0
    neg_mag: float = 0.0
    neg_angle: float = 0.0
    base_voltage: float = 1.0

    def __post_init__(self):
        if self.pos_mag < 0 or self.neg_mag < 0:
            raise DomainError("sequence magnitudes must be non-negative")
        if not self.base_voltage > 0:
            raise DomainError("base_voltage must be positive")

    @property
    def positive(self) -> complex:
        return cmath.rect(self.pos_mag, self.pos_angle)

    @property
    def negative(self) -> complex:
        return cmath.rect(self.neg_mag, self.neg_angle)


@dataclass(frozen=True)
class InputImpedance:
    """Parallel R_in || jX_in seen from the PCC; ``b_in = 1/X_in`` (0 for UPF)."""

    r_in: float
    b_in: float = 0.0

    def __post_init__(self):
        if not self.r_in > 0:
            raise DomainError(f"r_in must be positive, got {self.r_in}")
        if self.b_in < 0:
            raise DomainError(f"b_in must be non-negative, got {self.b_in}")

    @property
    def x_in(self) -> float:
        return math.inf if self.b_in == 0 else 1.0 / self.b_in

    @property
    def impedance(self) -> complex:
        """Complex impedance of the parallel combination."""
        g = 1.0 / self.r_in
        return 1.0 / complex(g, -self.b_in)


@dataclass(frozen=True)
class SeriesImpedance:
    r1: float
    x1: float

    def __post_init__(self):
        if not self.r1 > 0:
            raise DomainError(f"r1 must be positive, got {self.r1}")


@dataclass(frozen=True)
class FilterParams:
    """Series RL filter between the PCC and the converter terminals.

    The resistance is carried for completeness but ignored by
    :func:`parallel_to_series` and :func:`buffer_voltage_dq`.
    """

    resistance: float
    inductance: float
    mains_freq: float = MAINS_OMEGA_50HZ  # rad/s

    def __post_init__(self):
        if not self.inductance > 0:
            raise DomainError("filter inductance must be positive")
        if not self.mains_freq > 0:
            raise DomainError("mains_freq must be positive")
        if self.resistance < 0:
            raise DomainError("filter resistance must be non-negative")

    @property
    def reactance(self) -> float:
        return self.mains_freq * self.inductance


def compute_input_impedance(v_g0: float, p_l: float, q_l: float = 0.0) -> InputImpedance:
    """Equivalent pre-sag impedance of the buffer-load combination.

    ``R_in = V_g0**2 / P_l`` and ``1/X_in = Q_l / V_g0**2``.
    """
    if not v_g0 > 0:
        raise DomainError(f"pre-sag voltage must be positive, got {v_g0}")
    if not p_l > 0:
        raise DomainError(f"load power must be positive, got {p_l}")
    if q_l < 0:
        raise DomainError(f"reactive load must be non-negative, got {q_l}")
    v2 = v_g0 * v_g0
    return InputImpedance(r_in=v2 / p_l, b_in=q_l / v2)


def parallel_to_series(z: InputImpedance, filt: FilterParams) -> SeriesImpedance:
    """Series form R1 + jX1 of the buffer behind the filter reactance.

    Written in terms of ``b_in`` so the UPF limit needs no special case:
    ``R1 = R_in / (1 + R_in^2 b^2)``, ``X1 = R_in^2 b / (1 + R_in^2 b^2) - X``.
    """
    rb2 = (z.r_in * z.b_in) ** 2
    den = 1.0 + rb2
    r1 = z.r_in / den
    x1 = z.r_in * z.r_in * z.b_in / den - filt.reactance
    return SeriesImpedance(r1=r1, x1=x1)


def buffer_voltage_dq(v_g: float, s: SeriesImpedance, x_filter: float) -> tuple[float, float]:
    """d/q components of the converter terminal voltage with V_g on the d axis."""
    xt = x_filter + s.x1
    den = s.r1 * s.r1 + xt * xt
    if den == 0:
        raise DegenerateCircuitError("R1^2 + (X + X1)^2 is zero")
    v_wd = v_g * (s.r1 * s.r1 + s.x1 * xt) / den
    v_wq = -v_g * s.r1 * x_filter / den
    return v_wd, v_wq


def max_power(v_g: float, r_in: float) -> float:
    """Real power drawn at UPF by the constant impedance ``r_in``."""
    return v_g * v_g / r_in


def sequence_decompose(phase_a: complex, phase_b: complex, phase_c: complex,
                       base_voltage: float = 1.0) -> SequenceVoltage:
    va, vb, vc = complex(phase_a), complex(phase_b), complex(phase_c)
    if not all(cmath.isfinite(v) for v in (va, vb, vc)):
        raise DomainError("phasors must be finite")
    a, a2 = A_OP, A_OP * A_OP
    v1 = (va + a * vb + a2 * vc) / 3.0 / base_voltage
    v2 = (va + a2 * vb + a * vc) / 3.0 / base_voltage
    return SequenceVoltage(
        pos_mag=abs(v1), pos_angle=cmath.phase(v1),
        neg_mag=abs(v2), neg_angle=cmath.phase(v2),
        base_voltage=base_voltage,
    )


def sequence_phasors(seq: SequenceVoltage) -> tuple[complex, complex, complex]:
    """Phase phasors (volts RMS) synthesised from the two sequence sets."""
    a, a2 = A_OP, A_OP * A_OP
    v1 = seq.positive * seq.base_voltage
    v2 = seq.negative * seq.base_voltage
    return v1 + v2, a2 * v1 + a * v2, a * v1 + a2 * v2


def synth_waveforms(seq: SequenceVoltage, t, omega: float = MAINS_OMEGA_50HZ):
    """Instantaneous phase voltages ``sqrt(2)*|V|*cos(omega*t + angle)``.

    ``t`` may be a scalar or an array; the return matches its shape.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    rot = np.exp(1j * omega * t)
    out = tuple(math.sqrt(2.0) * np.real(p * rot) for p in sequence_phasors(seq))
    if out[0].ndim == 0:
        return tuple(float(v) for v in out)
    return out


def waveform_phasors(t, v_a, v_b, v_c, omega: float = MAINS_OMEGA_50HZ):
    """Fundamental RMS phasors of sampled phase voltages.

    ``t`` must span a whole number of mains cycles with uniform spacing and
    no repeated endpoint; the estimate is a single-bin DFT.
    """
    t = np.asarray(t, dtype=float)
    kernel = np.exp(-1j * omega * t) * (math.sqrt(2.0) / t.size)
    return tuple(complex(np.sum(np.asarray(v) * kernel)) for v in (v_a, v_b, v_c))
