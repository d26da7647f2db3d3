import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wfmpc.exceptions import InvalidParameterError
from wfmpc.freq_control import (DerivativeFilter, FreqCtrlParams, FrequencyTrace,
                                constant_frequency, derivative_estimate, load_frequency_csv,
                                power_reference, synthetic_excursion)

PAR = FreqCtrlParams()


def test_constant_samples_have_zero_slope():
    assert derivative_estimate(np.full(20, 50.0), 1.0, 1.0) == 0.0


def test_ramp_slope_recovered():
    f = 50.0 + 0.01 * np.arange(200)
    assert derivative_estimate(f, 1.0, 1.0) == pytest.approx(0.01, abs=1e-6)


def test_noise_response_bounded():
    rng = np.random.default_rng(0)
    eps, dt, tf = 0.003, 1.0, 1.0
    f = 50.0 + eps * rng.uniform(-1, 1, 2000)
    filt = DerivativeFilter(dt, tf)
    gain = 1.0 - math.exp(-dt / tf)
    out = []
    for k, v in enumerate(f):
        d = filt.update(v)
        if k > 1:
            out.append(d)
    # backward differences of noise in [-eps, eps] stay within 2 eps / dt;
    # a first-order low-pass with unit DC gain cannot exceed its input bound
    assert np.max(np.abs(out)) <= 2 * eps / dt
    assert np.std(out) <= 2 * eps / dt * math.sqrt(gain / (2 - gain)) * 1.5


def test_derivative_needs_two_samples():
    with pytest.raises(InvalidParameterError):
        derivative_estimate([50.0], 1.0, 1.0)


def test_pass_through_at_nominal():
    assert power_reference(100.0, [50.0, 50.0, 50.0], PAR, 1.0) == 100.0


def test_droop_and_inertia_example():
    # f = 49.9 now (df = 0.1) and falling at 0.02 Hz/s
    assert power_reference(100.0, [49.9], PAR, 1.0, dfdt=-0.02) == pytest.approx(105.2, abs=1e-12)
    window = 49.9 + 0.02 * np.arange(30)[::-1]
    assert power_reference(100.0, window, PAR, 1.0) == pytest.approx(105.2, abs=1e-9)


def test_inertia_only_example():
    window = 50.0 + 0.02 * np.arange(40)[::-1]  # ends at 50.0 falling 0.02 Hz/s
    assert power_reference(80.0, window, PAR, 1.0) == pytest.approx(80.2, abs=1e-9)


def test_zero_gains_pass_through():
    p = FreqCtrlParams(k_droop=0.0, k_inertia=0.0)
    assert power_reference(37.5, [49.7, 49.6], p, 1.0) == 37.5


def test_clamped_at_zero():
    assert power_reference(1.0, [50.5], PAR, 1.0, dfdt=0.0) == 0.0


def test_empty_window():
    with pytest.raises(InvalidParameterError):
        power_reference(10.0, [], PAR, 1.0)


@given(st.floats(-0.5, 0.5), st.floats(-0.1, 0.1), st.floats(-0.5, 0.5), st.floats(-0.1, 0.1))
def test_affine_superposition(d1, r1, d2, r2):
    def ref(df, rate):
        return power_reference(500.0, [50.0 - df], PAR, 1.0, dfdt=rate) - 500.0
    assert ref(d1 + d2, r1 + r2) == pytest.approx(ref(d1, r1) + ref(d2, r2), abs=1e-9)


def test_trace_guard():
    with pytest.raises(InvalidParameterError):
        FrequencyTrace(1.0, [50.0, 52.5])


def test_synthetic_excursion_shape():
    tr = synthetic_excursion(300.0, 1.0, depth=0.1, seed=0)
    assert tr.samples.size == 300
    assert tr.samples.min() < 49.93 and tr.samples.max() > 50.0
    assert np.all(np.abs(tr.samples - 50.0) < 0.2)
    assert np.array_equal(tr.samples, synthetic_excursion(300.0, 1.0, depth=0.1, seed=0).samples)


def test_constant_trace():
    tr = constant_frequency(49.95, 10.0, 1.0)
    assert tr.samples.size == 10 and np.all(tr.samples == 49.95)


def test_csv_ingestion(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("time_s,freq_hz\n0,50.0\n0.5,49.98\n1.0,49.97\n")
    tr = load_frequency_csv(p)
    assert tr.dt == 0.5 and np.array_equal(tr.samples, [50.0, 49.98, 49.97])


def test_negative_gains_rejected():
    with pytest.raises(InvalidParameterError):
        FreqCtrlParams(k_droop=-1.0)
