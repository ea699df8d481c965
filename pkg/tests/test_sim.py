import numpy as np
import pytest
from scipy.stats import binomtest, chisquare

from rrdps.channel import ChannelParams, bit_error_rate, detection_rate
from rrdps.errors import ConfigurationError
from rrdps.sim import Detections, SimConfig, pairing_distribution, run_blocks, sift_keys, simulate_pulse_chunk


def test_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(L=128, mu0=0.01, n_blocks=10**9, max_pulses=10**10)
    with pytest.raises(ValueError):
        SimConfig(L=1, mu0=0.01)
    with pytest.raises(ValueError):
        SimConfig(L=8, mu0=-0.01)
    assert SimConfig(L=8, mu0=0.1, fidelity="pulse").fidelity.value == "pulse"


@pytest.mark.parametrize("fidelity", ["model", "pulse"])
def test_determinism_and_thread_independence(fidelity):
    cfg = SimConfig(L=16, mu0=0.05, channel=ChannelParams(l=5.0), n_blocks=20000, seed=11, fidelity=fidelity)
    a, b, c = run_blocks(cfg), run_blocks(cfg), run_blocks(cfg, workers=3)
    for other in (b, c):
        assert (a.n_detected, a.n_errors) == (other.n_detected, other.n_errors)
        assert np.array_equal(a.offset_hist, other.offset_hist)
    d = run_blocks(SimConfig(**{**cfg.__dict__, "seed": 12}))
    assert (d.n_detected, d.n_errors) != (a.n_detected, a.n_errors)


def test_sift_keys_by_hand():
    alice = np.array([[0, 1, 1, 0], [1, 1, 0, 0]], dtype=np.int8)
    det = Detections(np.array([0, 0, 1]), np.array([1, 2, 1]), np.array([1, 2, 3]), np.array([1, 0, 1]))
    a_key, b_key = sift_keys(alice, det)
    assert a_key.tolist() == [1, 1, 1]
    assert b_key.tolist() == [1, 0, 1]
    with pytest.raises(IndexError):
        sift_keys(alice, Detections(np.array([0]), np.array([3]), np.array([2]), np.array([0])))


@pytest.mark.parametrize("L", [2, 8, 128])
def test_pairing_uniform(L):
    counts = pairing_distribution(1, L, 200_000, seed=5)
    assert counts[0] == 0  # never paired with itself
    partners = counts[1:]
    if partners.size == 1:  # L = 2: a single partner slot receives everything
        assert partners[0] == 200_000
    else:
        assert chisquare(partners).pvalue > 1e-4


def test_pairing_wraps_with_slot_L():
    counts = pairing_distribution(3, 4, 10_000, seed=1)
    assert counts[2] == 0 and counts.sum() == 10_000
    with pytest.raises(ValueError):
        pairing_distribution(0, 4, 10, seed=0)


def test_model_level_matches_closed_form():
    ch = ChannelParams(l=20.0)
    cfg = SimConfig(L=64, mu0=0.02, channel=ch, n_blocks=10**6, seed=3)
    res = run_blocks(cfg)
    Q = detection_rate(64, 0.02, ch.eta_sy, ch.p_d)
    e = bit_error_rate(64, 0.02, ch.eta_sy, ch.p_d, ch.e_sym)
    assert abs(res.Q_hat - Q) < 4 * res.se_Q
    assert abs(res.e_bit_hat - e) < 4 * res.se_e
    assert res.offset_hist[0] == 0 and res.offset_hist.sum() == res.n_detected


@pytest.mark.parametrize("L", [8, 32])
def test_pulse_level_agrees_with_model(L):
    ch = ChannelParams(l=10.0)
    cfg = SimConfig(L=L, mu0=1.0 / L, channel=ch, n_blocks=100_000, seed=9, fidelity="pulse")
    res = run_blocks(cfg)
    Q = detection_rate(L, 1.0 / L, ch.eta_sy, ch.p_d)
    e = bit_error_rate(L, 1.0 / L, ch.eta_sy, ch.p_d, ch.e_sym)
    assert abs(res.Q_hat - Q) < 4 * res.se_Q
    assert abs(res.e_bit_hat - e) < 4 * res.se_e


@pytest.mark.parametrize("e_sym", [0.0, 0.05, 0.2])
def test_pulse_level_error_rate_is_e_sym(e_sym):
    ch = ChannelParams(l=0.0, p_d=0.0, e_sym=e_sym)
    res = run_blocks(SimConfig(L=8, mu0=0.1, channel=ch, n_blocks=50_000, seed=2, fidelity="pulse"))
    if e_sym == 0.0:
        assert res.n_errors == 0
    else:
        assert binomtest(res.n_errors, res.n_detected, e_sym).pvalue > 1e-4


def test_pulse_detections_are_in_overlap():
    cfg = SimConfig(L=6, mu0=0.3, channel=ChannelParams(p_d=1e-3), n_blocks=4096, seed=4, fidelity="pulse")
    alice, det = simulate_pulse_chunk(cfg, 0, 4096)
    assert alice.shape == (4096, 6)
    assert np.all(det.k_d >= 1) and np.all(det.k_d + det.r <= 6)
    assert np.all((det.r >= 1) & (det.r <= 5))
