"""Time-domain simulation of the buffer through a voltage sag.

The converter is an averaged power source into the dc-link. In constant
power mode it regulates ``v_dc`` towards nominal but cannot draw more than
its pre-sag current, so its power is capped at ``P_l * v_g``. In constant
impedance mode it draws ``(v_g * V_base)**2 / R_in``. The battery branch,
when connected, follows the Thevenin RC model with constant parameters.

The integrator is classical fixed-step RK4 with inputs held over each step;
event times (sag edges, confirmation) land on the step grid.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .battery import (BatteryCalibration, BatteryState, ParamTable, RCParams,
                      emf_and_resistance, params_at_current, split_resistance, update_sod)
from .errors import ConfigurationError, DomainError, InfeasibleDemandError
from .phasor import max_power
from .small_signal import is_stable, linearize, poles
from .steady_state import operating_point

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "v_g_pos", "v_g_neg", "v_dc", "v_cp", "i_btr", "p_in", "q_in",
               "p_batt", "i_in_pu", "mode")
STIFFNESS_LIMIT = 0.1  # max dt*|s_fast|


class Mode(enum.Enum):
    CONSTANT_POWER = "constant_power"
    CONSTANT_IMPEDANCE = "constant_impedance"


@dataclass(frozen=True)
class SagEvent:
    t_start: float
    duration: float
    pos_pu: float
    neg_pu: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError("sag duration must be positive")
        if self.pos_pu < 0 or self.neg_pu < 0:
            raise DomainError("sequence magnitudes must be non-negative")
        if self.t_start < 0:
            raise DomainError("sag start must be non-negative")

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


@dataclass(frozen=True)
class SimConfig:
    dt: float = 50e-6
    t_end: float = 0.34
    detect_threshold: float = 0.95
    confirm_delay: float = 2e-3
    nominal_v_dc: float = 859.0
    dc_band: float = 0.10
    battery_enabled: bool = True
    c_dc: float = 10e-3
    v_floor: float = 1.0
    # None selects R_s/R_p/C_p from the expected discharge current at switch-in
    discharge_current: float | None = None
    regulator_tau: float = 10e-3
    disconnect_band: float = 0.005
    stop_on_collapse: bool = True
    resistance_model: str = "table"  # or "universal": total R from the SOD model

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.confirm_delay < 0:
            raise ConfigurationError("confirm_delay must be non-negative")
        if not 0 < self.detect_threshold < 1:
            raise ConfigurationError("detect_threshold must lie in (0, 1)")
        if not (self.nominal_v_dc > 0 and self.c_dc > 0 and self.v_floor > 0):
            raise ConfigurationError("nominal_v_dc, c_dc and v_floor must be positive")
        if not self.regulator_tau > 0:
            raise ConfigurationError("regulator_tau must be positive")
        if self.resistance_model not in ("table", "universal"):
            raise ConfigurationError(f"unknown resistance_model {self.resistance_model!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class BufferState:
    t: float
    v_dc: float
    v_cp: float = 0.0
    mode: Mode = Mode.CONSTANT_POWER
    battery_connected: bool = False
    f: float = 0.0


@dataclass(frozen=True)
class StepInputs:
    """Everything held constant across one integration step."""

    p_load: float
    v_g_pos: float
    r_in: float
    v_base: float
    c_dc: float
    e: float = 0.0
    rc: RCParams | None = None
    nominal_v_dc: float = 859.0
    regulator_tau: float = 10e-3
    v_floor: float = 1.0


@dataclass
class TimeSeries:
    columns: dict[str, np.ndarray]
    collapsed: bool = False
    collapse_time: float = math.nan
    switch_in_time: float = math.nan
    recovery_time: float = math.nan
    disconnect_time: float = math.nan
    rc: RCParams | None = None
    e: float = math.nan
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def __len__(self) -> int:
        return len(self.columns["t"])

    def window(self, t0: float, t1: float) -> np.ndarray:
        t = self.columns["t"]
        return (t >= t0 - 1e-12) & (t <= t1 + 1e-12)

    def to_csv(self, path) -> Path:
        path = Path(path)
        cols = [self.columns[c] for c in CSV_COLUMNS]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for row in zip(*cols):
                w.writerow([v if isinstance(v, str) else f"{v:.12g}" for v in row])
        return path


def mismatch_power(p_l: float, v_g_pos: float, r_in: float, v_base: float) -> float:
    """Load demand minus the power drawn at constant impedance."""
    return p_l - max_power(v_g_pos * v_base, r_in)


def battery_current(v_dc: float, v_cp: float, e: float, rc: RCParams) -> float:
    return (e - v_dc - v_cp) / rc.r_s


def derivatives(state: BufferState, delta_p: float, e: float, rc: RCParams,
                c_dc: float, v_floor: float = 1.0) -> tuple[float, float]:
    """Constant impedance mode with the battery connected."""
    v, vcp = state.v_dc, state.v_cp
    if v <= v_floor:
        raise DomainError(f"dc-link collapsed: v_dc={v} <= floor {v_floor}")
    dv = (-delta_p / v - vcp / rc.r_s + e / rc.r_s - v / rc.r_s) / c_dc
    dvcp = (e / rc.r_s - rc.r_total * vcp / (rc.r_s * rc.r_p) - v / rc.r_s) / rc.c_p
    return dv, dvcp


def input_power(mode: Mode, v_dc: float, inp: StepInputs) -> float:
    if mode is Mode.CONSTANT_IMPEDANCE:
        return max_power(inp.v_g_pos * inp.v_base, inp.r_in)
    # constant power: voltage regulation limited to the pre-sag current
    cap = inp.p_load * inp.v_g_pos
    demand = inp.p_load + inp.c_dc * v_dc * (inp.nominal_v_dc - v_dc) / inp.regulator_tau
    return min(max(demand, -cap), cap)


def _rhs(y: np.ndarray, mode: Mode, connected: bool, inp: StepInputs) -> np.ndarray:
    v = max(y[0], inp.v_floor)
    vcp = y[1]
    i_btr = battery_current(v, vcp, inp.e, inp.rc) if connected else 0.0
    p_in = input_power(mode, v, inp)
    dv = ((p_in - inp.p_load) / v + i_btr) / inp.c_dc
    dvcp = 0.0 if inp.rc is None else (i_btr - vcp / inp.rc.r_p) / inp.rc.c_p
    return np.array([dv, dvcp])


def rk4(fun, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = fun(y)
    k2 = fun(y + 0.5 * dt * k1)
    k3 = fun(y + 0.5 * dt * k2)
    k4 = fun(y + dt * k3)
    return y + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def step(state: BufferState, inputs: StepInputs, dt: float) -> BufferState:
    """Advance ``(v_dc, v_cp)`` by one RK4 step; mode and connection are held."""
    y = np.array([state.v_dc, state.v_cp], dtype=float)

    def fun(yy):
        return _rhs(yy, state.mode, state.battery_connected, inputs)

    y1 = rk4(fun, y, dt)
    return replace(state, t=state.t + dt, v_dc=float(y1[0]), v_cp=float(y1[1]))


def free_response(v_dc0: float, v_cp0: float, delta_p: float, e: float, rc: RCParams,
                  c_dc: float, dt: float, t_end: float):
    """Constant impedance run with fixed mismatch from an arbitrary start.

    Returns ``(t, v_dc, v_cp)`` arrays; used to probe fixed points and decay rates.
    """
    n = int(round(t_end / dt))
    # p_in - p_load = -delta_p in constant impedance mode
    inp = StepInputs(p_load=delta_p, v_g_pos=0.0, r_in=1.0, v_base=0.0, c_dc=c_dc,
                     e=e, rc=rc)
    out = np.empty((n + 1, 2))
    y = np.array([v_dc0, v_cp0], dtype=float)
    out[0] = y

    def fun(yy):
        return _rhs(yy, Mode.CONSTANT_IMPEDANCE, True, inp)

    for k in range(n):
        y = rk4(fun, y, dt)
        out[k + 1] = y
    return np.arange(n + 1) * dt, out[:, 0], out[:, 1]


def sequence_at(events: Sequence[SagEvent], t: float) -> tuple[float, float]:
    """Positive and negative sequence PCC voltage (p.u.) at time ``t``."""
    for ev in events:
        if ev.t_start - 1e-12 <= t < ev.t_end - 1e-12:
            return ev.pos_pu, ev.neg_pu
    return 1.0, 0.0


def _battery_rc(cfg: SimConfig, cal: BatteryCalibration, table: ParamTable,
                f: float, delta_p: float) -> tuple[float, RCParams]:
    e, r_b = emf_and_resistance(cal, f)
    if cfg.discharge_current is not None:
        i = cfg.discharge_current
    else:
        i = max(abs(delta_p) / cfg.nominal_v_dc, 1e-9)
    if cfg.resistance_model == "universal":
        return e, split_resistance(r_b, table, i)
    return e, params_at_current(table, i)


def check_step_size(cfg: SimConfig, cal: BatteryCalibration, table: ParamTable,
                    events: Sequence[SagEvent], p_l: float, r_in: float, v_base: float,
                    f0: float) -> None:
    """Reject a step too large for the fastest battery/dc-link pole."""
    for delta_p in [0.0] + [mismatch_power(p_l, ev.pos_pu, r_in, v_base) for ev in events]:
        e, rc = _battery_rc(cfg, cal, table, f0, delta_p)
        try:
            op = operating_point(e, rc, delta_p)
        except InfeasibleDemandError:
            op = operating_point(e, rc, 0.0)
        m = linearize(op, e, rc, cfg.c_dc)
        if not is_stable(m):
            continue
        s_fast = abs(poles(m).s_fast)
        if cfg.dt * s_fast >= STIFFNESS_LIMIT:
            raise ConfigurationError(
                f"dt={cfg.dt:g} s too large: dt*|s_fast| = {cfg.dt * s_fast:.3g} "
                f">= {STIFFNESS_LIMIT} (s_fast = {-s_fast:.4g} 1/s)")


def simulate(events: Sequence[SagEvent], cfg: SimConfig, cal: BatteryCalibration,
             table: ParamTable, load: float, r_in: float, v_base: float,
             f0: float = 0.0, b_in: float = 0.0) -> TimeSeries:
    """Run the sag detection / mode switch / battery switch-in sequence.

    Sag detection and confirmation, recovery, and battery disconnect are
    evaluated at step boundaries. The battery is connected with ``v_cp = 0``
    when the sag is confirmed and disconnected after recovery, once ``v_dc``
    is back within ``disconnect_band`` of nominal.
    """
    events = sorted(events, key=lambda ev: ev.t_start)
    check_step_size(cfg, cal, table, events, load, r_in, v_base, f0)
    n = cfg.n_steps
    dt = cfg.dt
    confirm_steps = int(round(cfg.confirm_delay / dt))

    names = ("t", "v_g_pos", "v_g_neg", "v_dc", "v_cp", "i_btr", "i_cap", "i_cp", "p_in",
             "q_in", "p_batt", "p_load", "i_in_pu", "f")
    rec = {k: np.zeros(n + 1) for k in names}
    modes = np.empty(n + 1, dtype=object)
    connected = np.zeros(n + 1, dtype=bool)

    state = BufferState(t=0.0, v_dc=cfg.nominal_v_dc, f=f0)
    bstate = BatteryState(f=f0)
    e = math.nan
    rc: RCParams | None = None
    pending = None  # step index at which the sag was first seen
    ts = TimeSeries(columns={})
    last = n
    p_rated = load

    for k in range(n + 1):
        t = k * dt
        v_pos, v_neg = sequence_at(events, t)
        state = replace(state, t=t)

        if state.mode is Mode.CONSTANT_POWER:
            if v_pos < cfg.detect_threshold:
                if pending is None:
                    pending = k
                if k - pending >= confirm_steps:
                    pending = None
                    state = replace(state, mode=Mode.CONSTANT_IMPEDANCE)
                    if math.isnan(ts.switch_in_time):
                        ts.switch_in_time = t
                    if cfg.battery_enabled and not state.battery_connected:
                        if rc is None:
                            delta_p = mismatch_power(load, v_pos, r_in, v_base)
                            e, rc = _battery_rc(cfg, cal, table, state.f, delta_p)
                        state = replace(state, battery_connected=True, v_cp=0.0)
            else:
                pending = None
                if (state.battery_connected and
                        abs(state.v_dc - cfg.nominal_v_dc) < cfg.disconnect_band * cfg.nominal_v_dc):
                    state = replace(state, battery_connected=False)
                    ts.disconnect_time = t
        elif v_pos >= cfg.detect_threshold:
            state = replace(state, mode=Mode.CONSTANT_POWER)
            ts.recovery_time = t

        inp = StepInputs(p_load=load, v_g_pos=v_pos, r_in=r_in, v_base=v_base, c_dc=cfg.c_dc,
                         e=e, rc=rc, nominal_v_dc=cfg.nominal_v_dc,
                         regulator_tau=cfg.regulator_tau, v_floor=cfg.v_floor)
        v = state.v_dc
        i_btr = battery_current(v, state.v_cp, e, rc) if state.battery_connected else 0.0
        p_in = input_power(state.mode, v, inp)
        rec["t"][k] = t
        rec["v_g_pos"][k] = v_pos
        rec["v_g_neg"][k] = v_neg
        rec["v_dc"][k] = v
        rec["v_cp"][k] = state.v_cp
        rec["i_btr"][k] = i_btr
        rec["i_cap"][k] = (p_in - load) / v + i_btr
        rec["i_cp"][k] = i_btr - (state.v_cp / rc.r_p if rc is not None else 0.0)
        rec["p_in"][k] = p_in
        rec["q_in"][k] = b_in * (v_pos * v_base) ** 2
        rec["p_batt"][k] = v * i_btr
        rec["p_load"][k] = load
        rec["i_in_pu"][k] = p_in / (p_rated * v_pos) if v_pos > 0 else 0.0
        rec["f"][k] = state.f
        modes[k] = state.mode.value
        connected[k] = state.battery_connected

        if k == n or (ts.collapsed and cfg.stop_on_collapse):
            last = k
            break

        nxt = step(state, inp, dt)
        if i_btr != 0.0:
            bstate = update_sod(bstate, i_btr, dt, cal)
            nxt = replace(nxt, f=bstate.f)
        if not nxt.v_dc > cfg.v_floor and not ts.collapsed:
            ts.collapsed = True
            ts.collapse_time = nxt.t
            log.info("dc-link collapsed at t=%.6f s", nxt.t)
            nxt = replace(nxt, v_dc=cfg.v_floor)
            # when running on, the load has dropped out
            load = 0.0
        state = nxt
    cols = {key: arr[:last + 1] for key, arr in rec.items()}
    cols["mode"] = modes[:last + 1]
    cols["battery_connected"] = connected[:last + 1]
    ts.columns = cols
    ts.rc, ts.e = rc, e
    return ts


def settling_time(ts: TimeSeries, v_final: float, t_from: float, t_to: float,
                  band: float = 0.02) -> float:
    """Time after ``t_from`` until ``v_dc`` stays within ``band*|v_final|`` of ``v_final``.

    Only the window ``[t_from, t_to]`` is examined; ``inf`` if ``v_dc`` is
    outside the band at ``t_to``.
    """
    mask = ts.window(t_from, t_to)
    t, v = ts["t"][mask], ts["v_dc"][mask]
    outside = np.abs(v - v_final) > band * abs(v_final)
    if outside.size == 0 or outside[-1]:
        return math.inf
    idx = np.nonzero(outside)[0]
    if idx.size == 0:
        return 0.0
    return float(t[idx[-1] + 1] - t_from)


@dataclass
class DischargeComparison:
    runs: dict[float, TimeSeries]
    v_final: dict[float, float]
    settling: dict[float, float]


def compare_discharge_profiles(events: Sequence[SagEvent], cfg: SimConfig,
                               cal: BatteryCalibration, table: ParamTable, load: float,
                               r_in: float, v_base: float, f0: float = 0.0,
                               currents: Sequence[float] = (153.0, 1000.0),
                               band: float = 0.02) -> DischargeComparison:
    """Rerun the first sag with the battery parameters of each discharge current."""
    if not events:
        raise DomainError("comparison needs at least one sag event")
    ev = sorted(events, key=lambda x: x.t_start)[0]
    delta_p = mismatch_power(load, ev.pos_pu, r_in, v_base)
    runs, finals, settle = {}, {}, {}
    for i in currents:
        run_cfg = replace(cfg, discharge_current=float(i), battery_enabled=True)
        ts = simulate(events, run_cfg, cal, table, load, r_in, v_base, f0)
        v_final = operating_point(ts.e, ts.rc, delta_p).v_dc_ss
        runs[i], finals[i] = ts, v_final
        settle[i] = settling_time(ts, v_final, ts.switch_in_time, ev.t_end - cfg.dt, band)
    return DischargeComparison(runs=runs, v_final=finals, settling=settle)
