import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from powerbuffer.errors import DomainError
from powerbuffer.phasor import (A_OP, FilterParams, InputImpedance, SequenceVoltage,
                                SeriesImpedance, buffer_voltage_dq, compute_input_impedance,
                                max_power, parallel_to_series, sequence_decompose,
                                sequence_phasors, synth_waveforms, waveform_phasors)

TABLE_FILTER = FilterParams(resistance=61.33e-3, inductance=0.97e-3)


def test_input_impedance_reference_load():
    z = compute_input_impedance(415, 100e3, 0)
    assert z.r_in == pytest.approx(1.72225, rel=1e-12)
    assert z.b_in == 0.0
    assert z.x_in == math.inf


def test_input_impedance_reactive():
    z = compute_input_impedance(415, 100e3, 50e3)
    assert z.x_in == pytest.approx(3.4445, rel=1e-12)


@pytest.mark.parametrize("v, p", [(-1, 1e3), (0, 1e3), (415, 0), (415, -5)])
def test_input_impedance_rejects_bad_domain(v, p):
    with pytest.raises(DomainError):
        compute_input_impedance(v, p)


def test_filter_reactance():
    assert TABLE_FILTER.reactance == pytest.approx(0.30473, abs=5e-6)


def test_parallel_to_series_upf_limit():
    s = parallel_to_series(InputImpedance(1.72225, 0.0), TABLE_FILTER)
    assert s.r1 == 1.72225
    assert s.x1 == pytest.approx(-0.30473, abs=5e-6)


def test_parallel_to_series_reactive():
    filt = FilterParams(0.0, 0.30473 / (2 * math.pi * 50))
    s = parallel_to_series(InputImpedance(1.72225, 1 / 3.4445), filt)
    assert s.r1 == pytest.approx(1.37780, abs=5e-6)
    assert s.x1 == pytest.approx(0.38417, abs=5e-6)


def test_parallel_to_series_matches_textbook_form():
    # R1 = R X^2/(R^2+X^2), X1 = R^2 X/(R^2+X^2) - X_f written with X_in directly
    r, x = 1.72225, 3.4445
    s = parallel_to_series(InputImpedance(r, 1 / x), TABLE_FILTER)
    assert s.r1 == pytest.approx(r * x * x / (r * r + x * x), rel=1e-13)
    assert s.x1 == pytest.approx(r * r * x / (r * r + x * x) - TABLE_FILTER.reactance, rel=1e-13)


@given(st.floats(0.01, 100), st.floats(0, 10), st.floats(1e-5, 1e-2))
def test_series_recombines_to_parallel(r_in, b_in, l):
    z = InputImpedance(r_in, b_in)
    filt = FilterParams(0.0, l)
    s = parallel_to_series(z, filt)
    # admittance of R_in in parallel with jX_in, where 1/(jX_in) = -j b_in
    parallel = 1 / complex(1 / r_in, -b_in)
    series = complex(s.r1, s.x1 + filt.reactance)
    assert abs(series - parallel) <= 1e-12 * abs(parallel)


def test_buffer_voltage_no_filter():
    s = SeriesImpedance(1.7, 0.2)
    assert buffer_voltage_dq(415, s, 0.0) == pytest.approx((415, 0.0))


def test_buffer_voltage_zero_input():
    assert buffer_voltage_dq(0.0, SeriesImpedance(1.7, -0.3), 0.3) == (0.0, 0.0)


def _divider(v_g, s, x):
    return v_g * complex(s.r1, s.x1) / complex(s.r1, x + s.x1)


@pytest.mark.parametrize("s, x", [
    (SeriesImpedance(1.72225, -0.30473), 0.30473),
    (SeriesImpedance(1.37780, 0.38417), 0.30473),
])
def test_buffer_voltage_matches_complex_divider(s, x):
    vd, vq = buffer_voltage_dq(415, s, x)
    ref = _divider(415, s, x)
    assert complex(vd, vq) == pytest.approx(ref, rel=1e-13)


@given(st.floats(0.01, 50), st.floats(-5, 5), st.floats(0.001, 5), st.floats(0, 1000))
def test_buffer_voltage_magnitude_identity(r1, x1, x, v_g):
    s = SeriesImpedance(r1, x1)
    vd, vq = buffer_voltage_dq(v_g, s, x)
    expected = v_g * abs(complex(r1, x1)) / abs(complex(r1, x + x1))
    assert math.hypot(vd, vq) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_max_power_values():
    assert max_power(415, 1.72225) == pytest.approx(100e3, rel=1e-12)
    assert max_power(332, 1.72225) == pytest.approx(64e3, rel=1e-12)
    assert max_power(0, 1.72225) == 0


@given(st.floats(0, 1e4), st.floats(0.01, 1e3), st.floats(0, 10))
def test_max_power_quadratic(v, r, k):
    assert max_power(k * v, r) == pytest.approx(k * k * max_power(v, r), rel=1e-12, abs=1e-300)


def test_decompose_balanced_sets():
    pos = sequence_decompose(1, cmath.rect(1, -2 * math.pi / 3), cmath.rect(1, 2 * math.pi / 3))
    assert pos.pos_mag == pytest.approx(1) and pos.neg_mag == pytest.approx(0, abs=1e-15)
    neg = sequence_decompose(1, cmath.rect(1, 2 * math.pi / 3), cmath.rect(1, -2 * math.pi / 3))
    assert neg.pos_mag == pytest.approx(0, abs=1e-15) and neg.neg_mag == pytest.approx(1)


def test_decompose_superposition():
    a = A_OP
    va, vb, vc = 0.8 + 0.2, 0.8 * a * a + 0.2 * a, 0.8 * a + 0.2 * a * a
    seq = sequence_decompose(va, vb, vc)
    assert seq.pos_mag == pytest.approx(0.8, rel=1e-14)
    assert seq.neg_mag == pytest.approx(0.2, rel=1e-14)


def test_decompose_rejects_nonfinite():
    with pytest.raises(DomainError):
        sequence_decompose(complex(math.nan, 0), 1, 1)


def test_synth_single_sequence_peak():
    seq = SequenceVoltage(pos_mag=0.9, base_voltage=415)
    va, vb, vc = synth_waveforms(seq, 0.0)
    assert va == pytest.approx(0.9 * 415 * math.sqrt(2))
    assert vb == pytest.approx(vc)


def test_synth_zero():
    seq = SequenceVoltage(pos_mag=0, neg_mag=0, base_voltage=415)
    assert all(np.all(v == 0) for v in synth_waveforms(seq, np.linspace(0, 0.02, 7)))


def test_synth_rejects_negative_time():
    with pytest.raises(DomainError):
        synth_waveforms(SequenceVoltage(1.0), -1.0)


@given(st.floats(0, 2), st.floats(-3, 3), st.floats(0, 2), st.floats(-3, 3))
def test_synth_decompose_roundtrip(pm, pa, nm, na):
    seq = SequenceVoltage(pm, pa, nm, na, base_voltage=415.0)
    t = np.arange(400) * (0.02 / 400)
    phasors = waveform_phasors(t, *synth_waveforms(seq, t))
    back = sequence_decompose(*phasors, base_voltage=415.0)
    assert back.positive == pytest.approx(seq.positive, abs=1e-9)
    assert back.negative == pytest.approx(seq.negative, abs=1e-9)


def test_sequence_phasors_zero_sum():
    va, vb, vc = sequence_phasors(SequenceVoltage(0.8, 0.1, 0.2, -0.4, 415))
    assert abs(va + vb + vc) < 1e-9
