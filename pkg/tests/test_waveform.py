import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_scenario
from dmimo_isac.channel import comm_channels
from dmimo_isac.errors import ConfigurationError
from dmimo_isac.waveform import build_frame, mrt_beamformer, proportional_power, round_robin_schedule


def frame_for(rho=0.5, L=16, M_t=3, K=2, N=4, seed=0, power=2.0, **kw):
    rng = np.random.default_rng(seed)
    ap = rng.uniform(0, 500, (M_t + 1, 2))
    ue = rng.uniform(0, 500, (K, 2))
    sc = make_scenario(ap, ue, N=N, power=power, rho=rho)
    G, beta = comm_channels(sc, range(M_t), rng)
    return sc, G, build_frame(sc, range(M_t), G, beta, L, rng, **kw)


def test_mrt_examples():
    np.testing.assert_allclose(mrt_beamformer([2, 0]), [1, 0])
    g = np.array([1 + 1j, 2 - 0.5j, -0.3j])
    w = mrt_beamformer(g)
    assert abs(np.vdot(g, w)) == pytest.approx(np.linalg.norm(g))
    np.testing.assert_allclose(mrt_beamformer(5 * g), w)
    with pytest.raises(ValueError):
        mrt_beamformer([0, 0])


def test_schedule_round_robin():
    d = round_robin_schedule(3, 9)
    assert np.all(d.sum(axis=0) == 1)
    assert np.all(d.sum(axis=1) == 3)


@given(st.integers(1, 7), st.integers(1, 40))
def test_schedule_balance(M_t, L):
    d = round_robin_schedule(M_t, L)
    assert np.all(d.sum(axis=0) == 1)
    counts = d.sum(axis=1)
    assert counts.min() >= L // M_t and counts.max() <= -(-L // M_t)


def test_frame_invariants():
    sc, G, fr = frame_for()
    np.testing.assert_allclose(np.linalg.norm(fr.beamformers, axis=-1), 1.0)
    assert np.all(fr.schedule.sum(axis=0) == 1)
    P = fr.expected_power()
    assert np.all(P <= fr.max_power[:, None] * (1 + 1e-9))
    np.testing.assert_allclose(fr.power_coeffs.sum(axis=1), fr.max_power)


def test_pure_comm_corner():
    _, _, fr = frame_for(rho=1.0)
    np.testing.assert_allclose(fr.sensing_signals, 0.0)
    np.testing.assert_allclose(fr.expected_power(), np.repeat(fr.power_coeffs.sum(axis=1)[:, None], fr.length, 1))


def test_pure_sensing_corner():
    _, _, fr = frame_for(rho=0.0)
    X = fr.signals
    expected = (fr.schedule * np.sqrt(fr.max_power)[:, None])[..., None] * fr.sensing_symbols[None]
    np.testing.assert_allclose(X, expected)
    P = fr.expected_power()
    np.testing.assert_allclose(P, fr.schedule * fr.max_power[:, None])


def test_empirical_power():
    """Mean ||x_t[l]||^2 over many symbol draws within 1% of the budget formula."""
    _, _, fr = frame_for(rho=0.4, L=100000, M_t=2, K=3, N=4, seed=5)
    X = fr.signals
    emp = (np.abs(X) ** 2).sum(axis=2).mean(axis=1)
    active = fr.schedule.mean(axis=1)
    model = fr.rho * fr.power_coeffs.sum(axis=1) + (1 - fr.rho) * active * fr.max_power
    np.testing.assert_allclose(emp, model, rtol=0.01)


def test_comm_symbols_unit_and_uncorrelated():
    _, _, fr = frame_for(L=50000, K=3)
    q = fr.comm_symbols
    np.testing.assert_allclose(np.abs(q), 1.0)
    C = q @ q.conj().T / q.shape[1]
    off = np.abs(C - np.diag(np.diag(C)))
    assert off.max() < 3 / np.sqrt(q.shape[1])
    lag = np.abs(np.mean(q[:, 1:] * q[:, :-1].conj(), axis=1))
    assert lag.max() < 3 / np.sqrt(q.shape[1])


def test_power_override_and_infeasible():
    sc, G, _ = frame_for()
    rng = np.random.default_rng(0)
    beta = np.ones((3, 2))
    with pytest.raises(ConfigurationError):
        build_frame(sc, range(3), G, beta, 4, rng, power_coeffs=np.full((3, 2), 2.0))
    with pytest.raises(ConfigurationError):
        build_frame(sc, range(3), G, beta, 4, rng, reference="bogus")


def test_proportional_power():
    p = proportional_power(np.array([[1.0, 3.0]]), np.array([4.0]))
    np.testing.assert_allclose(p, [[1.0, 3.0]])


def test_reference_signals():
    _, _, full = frame_for()
    _, _, sens = frame_for(reference="sensing_only")
    np.testing.assert_allclose(full.reference_signals, full.signals)
    np.testing.assert_allclose(sens.reference_signals, sens.sensing_signals)
    assert sens.scaled(2.0).reference == "sensing_only"


def test_steered_waveform():
    _, _, fr = frame_for(sensing_waveform="steered", steer_angle=0.3)
    np.testing.assert_allclose(np.linalg.norm(fr.sensing_symbols, axis=1), 1.0)
