"""Small-signal model of the dc-link plus battery branch around a steady point.

With state ``(dv_dc, dv_cp)`` the linearised dynamics are

    d/dt dv_dc = beta*dv_dc - dv_cp/(R_s C) - d(dP)/(C V_dc)
    d/dt dv_cp = -dv_dc/(R_s C_p) - alpha*dv_cp

whose characteristic polynomial is ``s**2 + (alpha - beta)*s - gamma - alpha*beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .battery import ParamTable, RCParams, params_at_current
from .errors import DomainError, SingularLinearizationError, UnstableModelError
from .steady_state import SteadyOperatingPoint, operating_point_at_current

GOLDEN_TOL = 0.1  # amps
_INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class LinearModel:
    alpha: float
    beta: float
    gamma: float
    c_dc: float
    v_dc_ss: float
    v_cp_ss: float
    e: float
    r_s: float = math.nan
    c_p: float = math.nan

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0 and self.c_dc > 0):
            raise DomainError("alpha, gamma and c_dc must be positive")

    @property
    def state_matrix(self) -> np.ndarray:
        return np.array([
            [self.beta, -1.0 / (self.r_s * self.c_dc)],
            [-1.0 / (self.r_s * self.c_p), -self.alpha],
        ])

    @property
    def char_poly(self) -> tuple[float, float, float]:
        return 1.0, self.alpha - self.beta, -self.gamma - self.alpha * self.beta


@dataclass(frozen=True)
class DampingReport:
    zeta_exact: float
    zeta_approx: float


@dataclass(frozen=True)
class PolePair:
    s_slow: float
    s_fast: float


@dataclass(frozen=True)
class SensitivityReport:
    dzeta_dRs: float
    dzeta_dRp: float
    dzeta_dCp: float
    dzeta_dRs_simplified: float  # drops the R_s*C and R_p*C terms; diagnostic only


def linearize(op: SteadyOperatingPoint, e: float, rc: RCParams, c_dc: float) -> LinearModel:
    if op.v_dc_ss == 0:
        raise SingularLinearizationError("cannot linearise at v_dc = 0")
    if not c_dc > 0:
        raise DomainError("c_dc must be positive")
    alpha = rc.r_total / (rc.r_s * rc.r_p * rc.c_p)
    beta = (e - 2.0 * op.v_dc_ss - op.v_cp_ss) / (rc.r_s * c_dc * op.v_dc_ss)
    gamma = 1.0 / (rc.r_s ** 2 * c_dc * rc.c_p)
    return LinearModel(alpha=alpha, beta=beta, gamma=gamma, c_dc=c_dc,
                       v_dc_ss=op.v_dc_ss, v_cp_ss=op.v_cp_ss, e=e,
                       r_s=rc.r_s, c_p=rc.c_p)


def is_stable(m: LinearModel) -> bool:
    """Routh-Hurwitz test on the second-order characteristic polynomial."""
    return (m.alpha - m.beta > 0) and (-m.alpha * m.beta - m.gamma > 0)


def above_half_emf(v_dc_ss: float, e: float) -> bool:
    """Cheap sufficient check: the operating branch sits above E/2."""
    return v_dc_ss > 0.5 * e


def zeta_approx(rc: RCParams, c_dc: float) -> float:
    """Damping ratio with ``E`` taken equal to the steady dc-link voltage."""
    rs, rp, cp, c = rc.r_s, rc.r_p, rc.c_p, c_dc
    return 0.5 * (rs * c + rp * c + rp * cp) / math.sqrt(rs * rp * c * cp)


def damping(m: LinearModel, rc: RCParams) -> DampingReport:
    if not is_stable(m):
        raise UnstableModelError("damping ratio is undefined for an unstable model")
    exact = 0.5 * (m.alpha - m.beta) / math.sqrt(-m.alpha * m.beta - m.gamma)
    return DampingReport(zeta_exact=exact, zeta_approx=zeta_approx(rc, m.c_dc))


def poles(m: LinearModel) -> PolePair:
    if not is_stable(m):
        raise UnstableModelError("poles requested for an unstable model")
    b = m.alpha - m.beta
    c0 = -m.gamma - m.alpha * m.beta
    disc = (m.alpha + m.beta) ** 2 + 4.0 * m.gamma
    s_fast = -0.5 * (b + math.sqrt(disc))
    # product form avoids cancellation in the small root
    s_slow = c0 / s_fast
    return PolePair(s_slow=s_slow, s_fast=s_fast)


def sensitivities(rc: RCParams, c_dc: float) -> SensitivityReport:
    """Analytic partial derivatives of :func:`zeta_approx`."""
    if not c_dc > 0:
        raise DomainError("c_dc must be positive")
    rs, rp, cp, c = rc.r_s, rc.r_p, rc.c_p, c_dc
    root = math.sqrt(rs * rp * c * cp)
    return SensitivityReport(
        dzeta_dRs=(rs * c - rp * c - rp * cp) / (4.0 * rs * root),
        dzeta_dRp=(rp * c + rp * cp - rs * c) / (4.0 * rp * root),
        dzeta_dCp=(rp * cp - rs * c - rp * c) / (4.0 * cp * root),
        dzeta_dRs_simplified=-rp * cp / (4.0 * rs * root),
    )


def zeta_at_current(table: ParamTable, c_dc: float, i_discharge: float) -> float:
    return zeta_approx(params_at_current(table, i_discharge), c_dc)


def golden_section_max(fun, a: float, b: float, tol: float = GOLDEN_TOL) -> float:
    """Maximiser of a unimodal ``fun`` on [a, b] to within ``tol``."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def worst_case_current(table: ParamTable, c_dc: float,
                       scan: tuple[float, float] | None = None,
                       tol: float = GOLDEN_TOL) -> tuple[float, float]:
    """Discharge current giving the largest damping ratio (slowest recovery).

    Endpoints are compared against the interior search result, so a
    maximiser on the boundary is returned exactly.
    """
    lo, hi = scan if scan is not None else table.span
    if lo > hi:
        raise DomainError("scan range is reversed")

    def zeta(i):
        return zeta_at_current(table, c_dc, i)

    if hi - lo <= tol:
        candidates = [lo, hi]
    else:
        candidates = [lo, golden_section_max(zeta, lo, hi, tol), hi]
    i_star = max(candidates, key=zeta)
    return i_star, zeta(i_star)


def current_sweep(table: ParamTable, c_dc: float, e: float, currents) -> list[dict]:
    """Damping ratio and dominant pole against discharge current.

    Each point is linearised at the steady state where the battery branch
    carries that current.
    """
    out = []
    for i in currents:
        rc = params_at_current(table, i)
        op = operating_point_at_current(e, rc, i)
        m = linearize(op, e, rc, c_dc)
        row = {"current": float(i), "zeta_approx": zeta_approx(rc, c_dc),
               "zeta_exact": math.nan, "s_slow": math.nan, "s_fast": math.nan}
        if is_stable(m):
            p = poles(m)
            row.update(zeta_exact=damping(m, rc).zeta_exact, s_slow=p.s_slow, s_fast=p.s_fast)
        out.append(row)
    return out
