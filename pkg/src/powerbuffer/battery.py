"""Lead-acid battery bank: Thevenin RC branch and the universal SOD model.

The Thevenin branch is an EMF ``E`` behind a series resistance ``R_s`` and a
parallel ``R_p || C_p`` element. Over a sag the four values are constants;
the state of discharge ``f`` only moves ``E`` and the total resistance
between scenarios (or via explicit coulomb counting).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import CalibrationRangeError, ConfigurationError, DepletedBatteryError, DomainError


@dataclass(frozen=True)
class BatteryCalibration:
    """Universal battery model ``E = e0 - k*f``, ``R_b = r0 - k_r*f``.

    ``k_r`` is usually negative: a deeper discharge raises the resistance.
    The defaults of the scenario file put ``r0`` and ``k`` where the steady
    ride-through envelope gives a 0.82 p.u. sag limit at ``f = 0.4`` with an
    859 V dc-link; they are calibration values, not measurements.
    """

    e0: float
    k: float
    r0: float
    k_r: float
    capacity: float  # ampere-hours
    f_min: float = 0.0
    f_max: float = 0.8

    def __post_init__(self):
        if not self.e0 > 0:
            raise CalibrationRangeError("e0 must be positive")
        if not self.r0 > 0:
            raise CalibrationRangeError("r0 must be positive")
        if not self.capacity > 0:
            raise CalibrationRangeError("capacity must be positive")
        if not self.f_min < self.f_max:
            raise CalibrationRangeError("f_min must be below f_max")
        # affine in f, so checking both ends covers the range
        for f in (self.f_min, self.f_max):
            if self.e0 - self.k * f <= 0 or self.r0 - self.k_r * f <= 0:
                raise CalibrationRangeError(
                    f"EMF or resistance not positive at f={f} for this calibration")

    def check_sod(self, f: float) -> None:
        if not (self.f_min <= f <= self.f_max):
            raise CalibrationRangeError(
                f"state of discharge {f} outside [{self.f_min}, {self.f_max}]")


@dataclass(frozen=True)
class RCParams:
    r_s: float
    r_p: float
    c_p: float

    def __post_init__(self):
        if not (self.r_s > 0 and self.r_p > 0 and self.c_p > 0):
            raise DomainError(f"RC parameters must be strictly positive: {self}")

    @property
    def r_total(self) -> float:
        return self.r_s + self.r_p

    def scaled(self, r_factor: float = 1.0, c_factor: float = 1.0) -> "RCParams":
        return RCParams(self.r_s * r_factor, self.r_p * r_factor, self.c_p * c_factor)


@dataclass(frozen=True)
class ParamTable:
    """RC parameters tabulated against discharge current (strictly increasing)."""

    entries: tuple[tuple[float, RCParams], ...]

    def __post_init__(self):
        entries = tuple((float(i), rc) for i, rc in self.entries)
        if not entries:
            raise ConfigurationError("parameter table is empty")
        currents = [i for i, _ in entries]
        if any(i <= 0 for i in currents):
            raise ConfigurationError("table currents must be positive")
        if any(b <= a for a, b in zip(currents, currents[1:])):
            raise ConfigurationError("table currents must be strictly increasing")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[float, float, float, float]]) -> "ParamTable":
        """Build from ``(current, r_s, r_p, c_p)`` rows in any order."""
        rows = sorted(rows, key=lambda r: r[0])
        return cls(tuple((i, RCParams(rs, rp, cp)) for i, rs, rp, cp in rows))

    @property
    def currents(self) -> list[float]:
        return [i for i, _ in self.entries]

    @property
    def span(self) -> tuple[float, float]:
        return self.entries[0][0], self.entries[-1][0]


# reference battery bank: parameters measured at 153 A and 1000 A discharge
REFERENCE_RC_TABLE = ParamTable.from_rows([
    (153.0, 0.461, 0.288, 6.94),
    (1000.0, 0.216, 0.072, 1.39),
])


@dataclass(frozen=True)
class BatteryState:
    f: float
    v_cp: float = 0.0
    i_btr: float = 0.0


def emf_and_resistance(cal: BatteryCalibration, f: float) -> tuple[float, float]:
    cal.check_sod(f)
    e = cal.e0 - cal.k * f
    r_b = cal.r0 - cal.k_r * f
    if e <= 0 or r_b <= 0:
        raise CalibrationRangeError(f"non-physical battery at f={f}: E={e}, R_b={r_b}")
    return e, r_b


def _interp_weight(table: ParamTable, i_discharge: float) -> tuple[int, float]:
    """Bracket index and weight for interpolation linear in ln(current)."""
    currents = table.currents
    if len(currents) == 1 or i_discharge <= currents[0]:
        return 0, 0.0
    if i_discharge >= currents[-1]:
        return len(currents) - 1, 0.0
    j = bisect.bisect_right(currents, i_discharge) - 1
    lo, hi = currents[j], currents[j + 1]
    w = (math.log(i_discharge) - math.log(lo)) / (math.log(hi) - math.log(lo))
    return j, w


def params_at_current(table: ParamTable, i_discharge: float) -> RCParams:
    """RC parameters at a discharge current.

    Each parameter is interpolated linearly in ``ln(i)`` between neighbouring
    knots and held at the end values outside the tabulated span.
    """
    if not i_discharge > 0:
        raise DomainError(f"discharge current must be positive, got {i_discharge}")
    j, w = _interp_weight(table, i_discharge)
    a = table.entries[j][1]
    if w == 0.0:
        return a
    b = table.entries[j + 1][1]
    return RCParams(
        r_s=a.r_s + w * (b.r_s - a.r_s),
        r_p=a.r_p + w * (b.r_p - a.r_p),
        c_p=a.c_p + w * (b.c_p - a.c_p),
    )


def split_resistance(r_b: float, table: ParamTable, i_discharge: float) -> RCParams:
    """Share a total resistance between R_s and R_p using the tabulated ratio.

    ``C_p`` comes straight from the table; ``r_s + r_p == r_b``.
    """
    if not r_b > 0:
        raise DomainError(f"total resistance must be positive, got {r_b}")
    rc = params_at_current(table, i_discharge)
    ratio = rc.r_s / rc.r_total
    r_s = ratio * r_b
    return RCParams(r_s=r_s, r_p=r_b - r_s, c_p=rc.c_p)


def update_sod(state: BatteryState, i_btr: float, dt: float,
               cal: BatteryCalibration) -> BatteryState:
    """Coulomb-count ``i_btr`` (positive on discharge) over ``dt`` seconds."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    f = state.f + i_btr * dt / (3600.0 * cal.capacity)
    if not (cal.f_min <= f <= cal.f_max):
        raise DepletedBatteryError(
            f"state of discharge left [{cal.f_min}, {cal.f_max}]: f={f:.6g}")
    return replace(state, f=f, i_btr=i_btr)
