import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrdps.channel import (
    ChannelParams,
    OperatingPoint,
    bit_error_rate,
    channel_transmittance,
    detection_rate,
    e_src_case_i,
    e_src_case_ii,
    tha_nu_th_increase,
    tha_phase_error_delta,
    vacuum_bounds_case_ii,
)
from rrdps.security import SourceSpec, poisson_tail


def test_transmittance_values():
    assert channel_transmittance(0.0) == 1.0
    assert channel_transmittance(50.0) == pytest.approx(0.1, rel=1e-14)
    assert channel_transmittance(100.0, alpha=0.1) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(ValueError):
        channel_transmittance(-1.0)


def test_channel_params_derived():
    c = ChannelParams(l=50.0)
    assert c.eta_sy == pytest.approx(0.015, rel=1e-14)
    assert c.at(0.0).eta_sy == pytest.approx(0.15)
    assert c.at(0.0).p_d == c.p_d


@pytest.mark.parametrize("kw", [{"l": -1}, {"eta_d": 1.5}, {"p_d": -0.1}, {"e_sym": 0.6}, {"f_EC": 0.9}, {"alpha": -0.2}])
def test_channel_params_validation(kw):
    with pytest.raises(ValueError):
        ChannelParams(**kw)


def test_operating_point():
    assert OperatingPoint(128, 0.01).range == (0.01, 0.01)
    assert OperatingPoint(128, 0.01, (0.0099, 0.0101)).range == (0.0099, 0.0101)
    with pytest.raises(ValueError):
        OperatingPoint(128, 0.01, (0.02, 0.01))


def test_detection_rate_reference_point():
    # L mu eta_sy = 1 maximises the signal term at e^-1 / 2
    Q = detection_rate(100, 0.01, 1.0, 0.0)
    assert Q == pytest.approx(math.exp(-1) / 2, rel=1e-15)
    x = 128 * 0.03 * 0.015
    assert detection_rate(128, 0.03, 0.015, 5e-7) == pytest.approx(x * math.exp(-x) / 2 + 128 * 5e-7, rel=1e-15)


def test_bit_error_rate_limits():
    assert bit_error_rate(128, 0.03, 0.015, 0.0, 0.05) == pytest.approx(0.05, rel=1e-14)
    assert bit_error_rate(128, 0.0, 0.015, 5e-7, 0.05) == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ZeroDivisionError):
        bit_error_rate(128, 0.0, 0.015, 0.0, 0.05)


def test_vectorised_matches_scalar():
    mus = np.geomspace(1e-4, 0.1, 17)
    Qv = detection_rate(128, mus, 0.01, 5e-7)
    ev = bit_error_rate(128, mus, 0.01, 5e-7, 0.05)
    for m, q, e in zip(mus, Qv, ev):
        assert q == detection_rate(128, m, 0.01, 5e-7)
        assert e == bit_error_rate(128, m, 0.01, 5e-7, 0.05)


@given(st.floats(0, 0.5), st.floats(1e-9, 1e-3))
def test_bit_error_rate_between_sym_and_half(e_sym, p_d):
    e = bit_error_rate(64, 0.02, 0.01, p_d, e_sym)
    assert min(e_sym, 0.5) - 1e-15 <= e <= 0.5 + 1e-15


def test_e_src():
    assert e_src_case_i(128, 0.03, 10) == poisson_tail(128 * 0.03, 10)
    assert e_src_case_ii(128, 0.03, (0.0297, 0.0303), 10) == poisson_tail(128 * 0.0303, 10)
    assert e_src_case_ii(128, 0.03, (0.01, 0.02), 10) == poisson_tail(128 * 0.03, 10)
    assert e_src_case_ii(128, 0.03, (0.03, 0.03), 10) == e_src_case_i(128, 0.03, 10)


def test_vacuum_bounds_case_ii():
    b = vacuum_bounds_case_ii(0.03, (0.0297, 0.0303))
    assert b.p_U0 == b.p_L0 == math.exp(-0.03)
    assert b.p_U1 == math.exp(-0.0297) and b.p_L1 == math.exp(-0.0303)


def test_tha():
    assert tha_nu_th_increase(100, 1e-2) == 1
    assert tha_nu_th_increase(100, 1.5e-2) == 2
    assert tha_nu_th_increase(100, 0.0) == 0
    spec = SourceSpec(100, 5, 0.0)
    assert tha_phase_error_delta(100, 1e-2, spec, 0.01) == pytest.approx(1 / 99, rel=1e-14)
    assert tha_phase_error_delta(100, 0.0, spec, 0.01) == 0.0
