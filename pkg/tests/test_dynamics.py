import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powerbuffer import scenario
from powerbuffer.battery import RCParams
from powerbuffer.dynamics import (BufferState, Mode, SagEvent, StepInputs,
                                  compare_discharge_profiles, derivatives, free_response,
                                  mismatch_power, sequence_at, settling_time, simulate, step)
from powerbuffer.errors import ConfigurationError, DomainError
from powerbuffer.small_signal import linearize
from powerbuffer.steady_state import operating_point

R_IN = 415.0 ** 2 / 100e3
RC_1000 = RCParams(0.216, 0.072, 1.39)
RC_153 = RCParams(0.461, 0.288, 6.94)


@pytest.fixture(scope="module")
def sc():
    return scenario.default()


def run(sc, events=None, **overrides):
    cfg = replace(sc.sim_config, **overrides)
    ev = sc.events if events is None else events
    return simulate(ev, cfg, sc.calibration, sc.table, sc.p_load,
                    sc.input_impedance.r_in, sc.v_base, sc.sod)


@pytest.fixture(scope="module")
def sag_run(sc):
    return run(sc)


def test_mismatch_power():
    assert mismatch_power(100e3, 1.0, R_IN, 415) == pytest.approx(0, abs=1e-9)
    assert mismatch_power(100e3, 0.8, R_IN, 415) == pytest.approx(36e3)
    assert mismatch_power(100e3, 1.2, R_IN, 415) == pytest.approx(-44e3)


def test_derivatives_vanish_at_fixed_point():
    op = operating_point(864, RC_1000, 36e3)
    dv, dvcp = derivatives(BufferState(0, op.v_dc_ss, op.v_cp_ss), 36e3, 864, RC_1000, 10e-3)
    assert abs(dv) < 1e-9 and abs(dvcp) < 1e-9


def test_derivatives_sign_and_floor():
    dv, _ = derivatives(BufferState(0, 859.0, 0.0), 36e3, 864, RC_1000, 10e-3)
    # 859 V sits above the 851.8 V equilibrium
    assert dv < 0
    with pytest.raises(DomainError):
        derivatives(BufferState(0, 0.5, 0.0), 36e3, 864, RC_1000, 10e-3)


def test_step_holds_equilibrium():
    inp = StepInputs(p_load=100e3, v_g_pos=1.0, r_in=R_IN, v_base=415, c_dc=10e-3,
                     nominal_v_dc=859)
    s = step(BufferState(0.0, 859.0), inp, 50e-6)
    assert s.v_dc == pytest.approx(859.0, abs=1e-9)
    assert s.t == pytest.approx(50e-6)
    assert s.mode is Mode.CONSTANT_POWER


def test_sequence_at():
    ev = [SagEvent(0.04, 0.2, 0.8, 0.2)]
    assert sequence_at(ev, 0.0) == (1.0, 0.0)
    assert sequence_at(ev, 0.04) == (0.8, 0.2)
    assert sequence_at(ev, 0.24) == (1.0, 0.0)


def test_sag_event_validation():
    with pytest.raises(DomainError):
        SagEvent(0.0, 0.0, 0.8)
    with pytest.raises(DomainError):
        SagEvent(0.0, 0.1, -0.1)


def test_flat_run_without_events(sc):
    ts = run(sc, events=[], t_end=0.05)
    assert np.all(ts["v_dc"] == sc.nominal_v_dc)
    assert np.all(ts["i_btr"] == 0)
    assert set(ts["mode"]) == {"constant_power"}
    assert not ts.collapsed and math.isnan(ts.switch_in_time)


def test_sag_run_event_times(sag_run):
    assert sag_run.switch_in_time == pytest.approx(0.042)
    assert sag_run.recovery_time == pytest.approx(0.24)
    assert sag_run.disconnect_time > sag_run.recovery_time
    assert sag_run.rc == RC_153


def test_sag_run_plateau(sag_run, sc):
    m = sag_run.window(0.14, 0.2399)
    assert np.all(sag_run["p_in"][m] == pytest.approx(64e3, rel=1e-12))
    assert np.all(sag_run["i_in_pu"][m] == pytest.approx(0.8, rel=1e-12))
    p_batt = sag_run["p_batt"][m]
    assert np.all(np.abs(p_batt - 36e3) < 0.02 * 36e3)
    v = sag_run["v_dc"]
    assert np.all(np.abs(v - 859) <= 0.1 * 859)


def test_delay_window_draws_capped_power(sag_run):
    m = sag_run.window(0.04, 0.042 - 1e-9)
    assert np.all(sag_run["p_in"][m] == pytest.approx(80e3))
    assert np.all(sag_run["i_btr"][m] == 0)


def test_no_battery_collapses(sc):
    ts = run(sc, battery_enabled=False)
    assert ts.collapsed
    assert 0.04 < ts.collapse_time < 0.24
    assert ts["v_dc"][-1] == sc.sim_config.v_floor


def test_no_battery_run_on_after_collapse(sc):
    ts = run(sc, battery_enabled=False, stop_on_collapse=False)
    assert ts.collapsed and ts["t"][-1] == pytest.approx(sc.sim_config.t_end)
    assert np.all(ts["v_dc"] >= sc.sim_config.v_floor)


def test_deterministic(sc):
    a, b = run(sc, t_end=0.08), run(sc, t_end=0.08)
    for key in a.columns:
        assert np.array_equal(a[key], b[key])


def test_power_balance(sag_run, sc):
    # C v dv/dt, from the recorded trajectory, matches p_in - p_load + p_batt
    m = sag_run.window(0.05, 0.23)
    v = sag_run["v_dc"][m]
    dvdt = np.gradient(v, sc.sim_config.dt)[1:-1]  # central differences only
    net = (sag_run["p_in"] - sag_run["p_load"] + sag_run["p_batt"])[m][1:-1]
    assert np.max(np.abs(sc.c_dc * v[1:-1] * dvdt - net)) < 1e-4 * sc.p_load


def test_energy_bookkeeping(sag_run, sc):
    # stored energy change equals the integrated power flow on a smooth stretch
    m = sag_run.window(0.05, 0.23)
    t, v = sag_run["t"][m], sag_run["v_dc"][m]
    net = (sag_run["p_in"] - sag_run["p_load"] + sag_run["p_batt"])[m]
    stored = 0.5 * sc.c_dc * (v[-1] ** 2 - v[0] ** 2)
    assert np.trapezoid(net, t) == pytest.approx(stored, rel=1e-4)


def test_no_oscillation_in_sag(sag_run):
    m = sag_run.window(sag_run.switch_in_time, 0.24 - 1e-9)
    d = np.diff(sag_run["v_dc"][m])
    d = d[np.abs(d) > 1e-12]
    # an overdamped pair allows at most one extremum
    assert np.count_nonzero(np.diff(np.sign(d))) <= 1


def test_long_sag_settles_to_steady_state(sc):
    ev = [SagEvent(0.04, 1.2, 0.8)]
    ts = run(sc, events=ev, t_end=1.2, discharge_current=1000.0)
    expected = operating_point(ts.e, ts.rc, 36e3).v_dc_ss
    assert ts["v_dc"][-1] == pytest.approx(expected, rel=1e-3)


def test_step_size_rejected(sc):
    with pytest.raises(ConfigurationError):
        run(sc, dt=5e-3, confirm_delay=0.0)


def test_settling_time_helpers(sag_run):
    assert settling_time(sag_run, 859.0, 0.0, 0.03) == 0.0
    assert settling_time(sag_run, 700.0, 0.05, 0.2) == math.inf


def test_discharge_comparison(sc):
    cmp = compare_discharge_profiles(sc.events, sc.sim_config, sc.calibration, sc.table,
                                     sc.p_load, sc.input_impedance.r_in, sc.v_base, sc.sod)
    assert cmp.runs[153.0].rc == RC_153 and cmp.runs[1000.0].rc == RC_1000
    assert cmp.settling[153.0] > cmp.settling[1000.0]
    assert cmp.v_final[153.0] < cmp.v_final[1000.0]


def test_free_response_fixed_point():
    op = operating_point(864, RC_1000, 36e3)
    _, v, vcp = free_response(op.v_dc_ss, op.v_cp_ss, 36e3, 864, RC_1000, 10e-3, 50e-6, 0.2)
    assert np.max(np.abs(v - op.v_dc_ss)) < 1e-6
    assert np.max(np.abs(vcp - op.v_cp_ss)) < 1e-6


@given(st.floats(0.0, 0.6), st.floats(-20, 20), st.floats(-2, 2))
@settings(max_examples=25, deadline=None)
def test_free_response_contracts_in_modal_coordinates(frac, dv0, dvcp0):
    dp = frac * 864 ** 2 / (4 * RC_153.r_total)
    op = operating_point(864, RC_153, dp)
    _, v, vcp = free_response(op.v_dc_ss + dv0, op.v_cp_ss + dvcp0, dp, 864, RC_153,
                              10e-3, 50e-6, 0.1)
    # both real modes decay, so neither modal amplitude can grow
    vecs = np.linalg.eig(linearize(op, 864, RC_153, 10e-3).state_matrix)[1]
    start = np.abs(np.linalg.solve(vecs, [dv0, dvcp0]))
    end = np.abs(np.linalg.solve(vecs, [v[-1] - op.v_dc_ss, vcp[-1] - op.v_cp_ss]))
    assert np.all(end <= start * (1 + 1e-3) + 1e-9)
