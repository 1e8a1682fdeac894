"""Steady operating points of the buffer-battery system and the ride-through envelope."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .battery import BatteryCalibration, RCParams, emf_and_resistance
from .errors import DomainError, InfeasibleDemandError
from .phasor import max_power

BISECT_TOL = 1e-9  # p.u.
SCAN_RANGE = (0.0, 2.0)  # p.u.


@dataclass(frozen=True)
class SteadyOperatingPoint:
    v_dc_ss: float
    v_cp_ss: float
    delta_p: float

    def __post_init__(self):
        if not self.v_dc_ss > 0:
            raise DomainError(f"steady dc-link voltage must be positive, got {self.v_dc_ss}")


def vcp_ss(e: float, v_dc_ss: float, rc: RCParams) -> float:
    """Voltage across C_p once its current has died away."""
    return rc.r_p * (e - v_dc_ss) / rc.r_total


def mismatch_from_vdc(v_dc_ss: float, e: float, r_total: float) -> float:
    """Mismatch power the battery delivers with the dc-link held at ``v_dc_ss``."""
    if not r_total > 0:
        raise DomainError("r_total must be positive")
    return v_dc_ss * (e - v_dc_ss) / r_total


def max_mismatch(e: float, r_total: float) -> float:
    """Largest mismatch power the battery can cover (discriminant zero)."""
    if not r_total > 0:
        raise DomainError("r_total must be positive")
    return e * e / (4.0 * r_total)


def solve_vdc(e: float, r_total: float, delta_p: float) -> float:
    """Upper root of ``V**2 - E*V + R*dP = 0``.

    The lower root sits below E/2 where the linearised system is unstable,
    so it is never returned.
    """
    if not r_total > 0:
        raise DomainError("r_total must be positive")
    disc = e * e - 4.0 * r_total * delta_p
    if disc < 0:
        raise InfeasibleDemandError(
            f"mismatch {delta_p:.6g} W exceeds battery limit {max_mismatch(e, r_total):.6g} W")
    return 0.5 * (e + math.sqrt(disc))


def vdc_ss(cal: BatteryCalibration, f: float, delta_p: float) -> float:
    e, r_b = emf_and_resistance(cal, f)
    return solve_vdc(e, r_b, delta_p)


def operating_point(e: float, rc: RCParams, delta_p: float) -> SteadyOperatingPoint:
    """Steady (v_dc, v_cp) for a Thevenin branch supplying ``delta_p``."""
    v = solve_vdc(e, rc.r_total, delta_p)
    return SteadyOperatingPoint(v_dc_ss=v, v_cp_ss=vcp_ss(e, v, rc), delta_p=delta_p)


def operating_point_at_current(e: float, rc: RCParams, i_discharge: float) -> SteadyOperatingPoint:
    """Steady point at which the battery branch carries ``i_discharge``."""
    v = e - rc.r_total * i_discharge
    return SteadyOperatingPoint(v_dc_ss=v, v_cp_ss=rc.r_p * i_discharge,
                                delta_p=v * i_discharge)


def vdc_ss_from_sag(cal: BatteryCalibration, f: float, p_l: float, v_g: float,
                    r_in: float, v_base: float) -> float:
    """Steady dc-link voltage with the PCC at ``v_g`` p.u. in constant impedance mode."""
    delta_p = p_l - max_power(v_g * v_base, r_in)
    return vdc_ss(cal, f, delta_p)


def _bisect(fun, lo: float, hi: float, tol: float) -> float:
    """Root of an increasing ``fun`` with fun(lo) < 0 <= fun(hi)."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fun(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def ride_through_limits(cal: BatteryCalibration, f: float, p_l: float, r_in: float,
                        nominal_v_dc: float, v_base: float,
                        band: float = 0.10) -> tuple[float, float]:
    """Deepest sag and highest swell keeping ``v_dc_ss`` inside the band.

    Scans ``v_g`` over [0, 2] p.u. ``vg_min`` is 0 when even a full outage
    keeps the link above the lower limit; ``vg_max`` is ``inf`` when the
    upper limit is not reached inside the scan. ``nan`` marks a bound with
    no feasible ``v_g`` at all.
    """
    if not nominal_v_dc > 0:
        raise DomainError("nominal_v_dc must be positive")
    lower, upper = (1 - band) * nominal_v_dc, (1 + band) * nominal_v_dc
    g_lo, g_hi = SCAN_RANGE

    def v_of(v_g):
        try:
            return vdc_ss_from_sag(cal, f, p_l, v_g, r_in, v_base)
        except InfeasibleDemandError:
            return -math.inf

    def above_lower(v_g):
        return v_of(v_g) - lower

    def above_upper(v_g):
        return v_of(v_g) - upper

    if above_lower(g_lo) >= 0:
        vg_min = g_lo
    elif above_lower(g_hi) < 0:
        vg_min = math.nan
    else:
        vg_min = _bisect(above_lower, g_lo, g_hi, BISECT_TOL)

    if above_upper(g_hi) <= 0:
        vg_max = math.inf
    elif above_upper(g_lo) > 0:
        vg_max = math.nan
    else:
        vg_max = _bisect(above_upper, g_lo, g_hi, BISECT_TOL)
    return vg_min, vg_max


@dataclass
class Envelope:
    f_grid: np.ndarray
    vg_grid: np.ndarray
    v_dc_surface: np.ndarray  # shape (len(f_grid), len(vg_grid)), nan where infeasible
    lower_limit: float
    upper_limit: float
    nominal_v_dc: float
    vg_min: np.ndarray  # per f, the AB/CD limit curves expressed in v_g
    vg_max: np.ndarray

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.v_dc_surface)

    @property
    def in_band(self) -> np.ndarray:
        s = np.where(self.feasible, self.v_dc_surface, -np.inf)
        return (s >= self.lower_limit) & (s <= self.upper_limit)

    def rows(self):
        """Yield ``(f, v_g, v_dc_ss, feasible, in_band)`` per cell, f-major."""
        feas, band = self.feasible, self.in_band
        for i, f in enumerate(self.f_grid):
            for j, vg in enumerate(self.vg_grid):
                yield (float(f), float(vg), float(self.v_dc_surface[i, j]),
                       bool(feas[i, j]), bool(band[i, j]))


def build_envelope(cal: BatteryCalibration, f_grid, vg_grid, p_l: float, r_in: float,
                   nominal_v_dc: float, v_base: float, band: float = 0.10) -> Envelope:
    f_grid = np.atleast_1d(np.asarray(f_grid, dtype=float))
    vg_grid = np.atleast_1d(np.asarray(vg_grid, dtype=float))
    if f_grid.size == 0 or vg_grid.size == 0:
        raise DomainError("envelope grids must be non-empty")
    surface = np.full((f_grid.size, vg_grid.size), np.nan)
    for i, f in enumerate(f_grid):
        for j, vg in enumerate(vg_grid):
            try:
                surface[i, j] = vdc_ss_from_sag(cal, f, p_l, vg, r_in, v_base)
            except InfeasibleDemandError:
                pass
    limits = np.array([ride_through_limits(cal, f, p_l, r_in, nominal_v_dc, v_base, band)
                       for f in f_grid]).reshape(-1, 2)
    return Envelope(
        f_grid=f_grid, vg_grid=vg_grid, v_dc_surface=surface,
        lower_limit=(1 - band) * nominal_v_dc, upper_limit=(1 + band) * nominal_v_dc,
        nominal_v_dc=nominal_v_dc, vg_min=limits[:, 0], vg_max=limits[:, 1],
    )
