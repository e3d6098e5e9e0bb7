"""Closed-form success probabilities against the Monte-Carlo oracle and
each other."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sicmesh.channel import (
    ChannelParams,
    CoLocatedError,
    ReceptionPolicy,
    TransmitterState,
    success_prob_ian,
    success_prob_ian_multi,
    success_prob_mc,
    success_prob_sic,
    success_prob_solo,
)

UNIT = ChannelParams(path_loss_exponent=3.0, noise_power=1.0)


def tx(power=1.0, gamma=1.0, pos=(0.0, 0.0)):
    return TransmitterState(power, gamma, pos)


def test_solo_zero_threshold_always_succeeds():
    assert success_prob_solo(tx(gamma=0.0), (1.0, 0.0), UNIT) == 1.0


def test_solo_direct_values():
    # exp(-gamma r^a N0 / p) evaluated by hand
    assert success_prob_solo(tx(), (1.0, 0.0), UNIT) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert success_prob_solo(tx(), (2.0, 0.0), UNIT) == pytest.approx(math.exp(-8.0), rel=1e-12)


def test_solo_noise_generalization():
    # dividing received power by N0: r=1, p=1, N0=0.5 behaves like p=2
    a = success_prob_solo(tx(), (1.0, 0.0), ChannelParams(3.0, 0.5))
    b = success_prob_solo(tx(power=2.0), (1.0, 0.0), UNIT)
    assert a == pytest.approx(b, rel=1e-12)


def test_solo_zero_distance_rejected():
    with pytest.raises(CoLocatedError):
        success_prob_solo(tx(), (0.0, 0.0), UNIT)


def test_ian_zero_threshold():
    assert success_prob_ian(tx(gamma=0.0), tx(pos=(0.0, 1.0)), (1.0, 0.0), UNIT) == 1.0


def test_ian_symmetric_case():
    # equal powers and distances: bracket term halves the solo probability
    p = success_prob_ian(tx(), tx(pos=(2.0, 0.0)), (1.0, 0.0), UNIT)
    assert p == pytest.approx(math.exp(-1.0) / 2.0, rel=1e-12)


def test_ian_vanishing_interferer_recovers_solo():
    weak = tx(power=1e-300, pos=(2.0, 0.0))
    p = success_prob_ian(tx(), weak, (1.0, 0.0), UNIT)
    assert p == success_prob_solo(tx(), (1.0, 0.0), UNIT)


def test_sic_zero_interferer_rate_reduces_to_solo():
    canceled = tx(gamma=0.0, pos=(2.0, 0.0))
    p = success_prob_sic(tx(), canceled, (1.0, 0.0), UNIT)
    assert p == pytest.approx(success_prob_solo(tx(), (1.0, 0.0), UNIT), rel=1e-12)


def test_sic_direct_value():
    # exp(-1) * exp(-2) * 1/2 at unit parameters
    p = success_prob_sic(tx(), tx(pos=(2.0, 0.0)), (1.0, 0.0), UNIT)
    assert p == pytest.approx(math.exp(-1.0) * math.exp(-2.0) * 0.5, rel=1e-12)


def test_ian_multi_reductions():
    interferer = tx(power=1.3, pos=(0.0, 1.7))
    rx = (1.0, 0.0)
    assert success_prob_ian_multi(tx(), [], rx, UNIT) == success_prob_solo(tx(), rx, UNIT)
    assert success_prob_ian_multi(tx(), [interferer], rx, UNIT) == success_prob_ian(tx(), interferer, rx, UNIT)


def test_ian_multi_two_symmetric_interferers():
    rx = (1.0, 0.0)
    ints = [tx(pos=(2.0, 0.0)), tx(pos=(1.0, 1.0))]
    assert success_prob_ian_multi(tx(), ints, rx, UNIT) == pytest.approx(math.exp(-1.0) / 4.0, rel=1e-12)


# -- Monte-Carlo oracle -----------------------------------------------------


def _mc_check(closed, tx_, interferers, policy, rx, n=1_000_000, seed=1234):
    est, se = success_prob_mc(tx_, interferers, policy, rx, UNIT, n, seed, cancel_ids=tuple(str(k) for k in range(len(interferers))))
    sigma = max(math.sqrt(closed * (1.0 - closed) / n), 1.0 / n)
    assert abs(est - closed) <= 4.0 * sigma, f"MC {est} vs closed {closed} ({abs(est-closed)/sigma:.2f} sigma)"


def test_mc_matches_solo():
    _mc_check(math.exp(-1.0), tx(), [], ReceptionPolicy("ian"), (1.0, 0.0))


def test_mc_matches_ian():
    _mc_check(math.exp(-1.0) / 2.0, tx(), [tx(pos=(2.0, 0.0))], ReceptionPolicy("ian"), (1.0, 0.0))


def test_mc_matches_sic():
    closed = success_prob_sic(tx(), tx(pos=(2.0, 0.0)), (1.0, 0.0), UNIT)
    _mc_check(closed, tx(), [tx(pos=(2.0, 0.0))], ReceptionPolicy("sic", ("0",)), (1.0, 0.0))


def test_mc_matches_ian_multi_two_interferers():
    closed = math.exp(-1.0) / 4.0
    ints = [tx(pos=(2.0, 0.0)), tx(pos=(1.0, 1.0))]
    est, se = success_prob_mc(
        tx(), ints, ReceptionPolicy("ian"), (1.0, 0.0), UNIT, 10_000_000, seed=99, cancel_ids=("0", "1")
    )
    sigma = math.sqrt(closed * (1.0 - closed) / 10_000_000)
    assert abs(est - closed) <= 4.0 * sigma


def test_mc_deterministic_for_fixed_seed():
    args = (tx(), [tx(pos=(2.0, 0.0))], ReceptionPolicy("ian"), (1.0, 0.0), UNIT, 50_000)
    assert success_prob_mc(*args, seed=7) == success_prob_mc(*args, seed=7)
    assert success_prob_mc(*args, seed=7) != success_prob_mc(*args, seed=8)


def test_mc_requires_samples():
    with pytest.raises(ValueError):
        success_prob_mc(tx(), [], ReceptionPolicy("ian"), (1.0, 0.0), UNIT, 0, seed=1)


# -- properties --------------------------------------------------------------

params = st.floats(min_value=0.05, max_value=3.0)
gammas = st.floats(min_value=0.0, max_value=4.0)


@given(gammas, params, params, params, params)
def test_probabilities_in_unit_interval(gamma, p1, p2, r1, r2):
    t = tx(power=p1, gamma=gamma)
    it = tx(power=p2, gamma=gamma, pos=(0.0, r2))
    rx = (r1, 0.0)
    for val in (
        success_prob_solo(t, rx, UNIT),
        success_prob_ian(t, it, rx, UNIT),
        success_prob_sic(t, it, rx, UNIT),
        success_prob_ian_multi(t, [it, it], rx, UNIT),
    ):
        assert 0.0 <= val <= 1.0


@given(gammas, gammas, params, params)
def test_monotone_in_threshold(g_lo, g_hi, p, r):
    g_lo, g_hi = sorted((g_lo, g_hi))
    rx = (r, 0.0)
    it = tx(pos=(0.0, 1.0))
    assert success_prob_solo(tx(p, g_hi), rx, UNIT) <= success_prob_solo(tx(p, g_lo), rx, UNIT)
    assert success_prob_ian(tx(p, g_hi), it, rx, UNIT) <= success_prob_ian(tx(p, g_lo), it, rx, UNIT)


@given(params, params, params)
def test_monotone_in_own_distance_and_power(p, r_lo, r_hi):
    r_lo, r_hi = sorted((r_lo, r_hi))
    it = tx(pos=(0.0, 1.0))
    assert success_prob_ian(tx(p), it, (r_hi, 0.0), UNIT) <= success_prob_ian(tx(p), it, (r_lo, 0.0), UNIT)
    assert success_prob_solo(tx(p), (1.0, 0.0), UNIT) <= success_prob_solo(tx(p * 1.5), (1.0, 0.0), UNIT)


@given(params, params)
def test_monotone_in_interferer_power(pi_lo, pi_hi):
    pi_lo, pi_hi = sorted((pi_lo, pi_hi))
    rx = (1.0, 0.0)
    p_weak = success_prob_ian(tx(), tx(power=pi_lo, pos=(0.0, 1.0)), rx, UNIT)
    p_strong = success_prob_ian(tx(), tx(power=pi_hi, pos=(0.0, 1.0)), rx, UNIT)
    assert p_strong <= p_weak


def test_sic_never_exceeds_solo():
    rng = np.random.default_rng(5)
    for _ in range(200):
        g1, g2 = rng.uniform(0.0, 3.0, 2)
        p1, p2, r1, r2 = rng.uniform(0.1, 3.0, 4)
        t = tx(p1, g1)
        c = tx(p2, g2, (0.0, r2))
        assert success_prob_sic(t, c, (r1, 0.0), UNIT) <= success_prob_solo(t, (r1, 0.0), UNIT) + 1e-15


def test_sic_beats_ian_only_under_asymmetry():
    """Strong (close) interferers favor cancelation, weak ones favor
    treating them as noise; both regimes must exist."""
    rx = (1.0, 0.0)
    gains = []
    for r2 in np.linspace(0.3, 3.0, 20):
        it = tx(pos=(1.0 + float(r2), 0.0))  # interferer at distance r2 from rx
        gains.append(success_prob_sic(tx(), it, rx, UNIT) - success_prob_ian(tx(), it, rx, UNIT))
    assert gains[0] > 0.0  # interferer close to the receiver: SIC wins
    assert gains[-1] < 0.0  # far interferer: joint decoding only hurts


def test_sic_gain_grows_with_interferer_proximity():
    rx = (1.0, 0.0)
    distances = np.linspace(0.25, 1.0, 12)
    gains = [
        success_prob_sic(tx(), tx(pos=(1.0 + float(r2), 0.0)), rx, UNIT)
        - success_prob_ian(tx(), tx(pos=(1.0 + float(r2), 0.0)), rx, UNIT)
        for r2 in distances
    ]
    # moving the interferer closer (stronger received power) helps SIC
    assert all(a > b for a, b in zip(gains[:-1], gains[1:]))


def test_reception_policy_invariants():
    with pytest.raises(ValueError):
        ReceptionPolicy("ian", ("x",))
    with pytest.raises(ValueError):
        ReceptionPolicy("sic", ("x", "x"))
    with pytest.raises(ValueError):
        ReceptionPolicy("other")


def test_transmitter_state_invariants():
    with pytest.raises(ValueError):
        TransmitterState(0.0, 1.0, (0.0, 0.0))
    with pytest.raises(ValueError):
        TransmitterState(1.0, -0.1, (0.0, 0.0))
    assert TransmitterState(1.0, 3.0, (0.0, 0.0)).rate == pytest.approx(2.0)


def test_channel_params_invariants():
    with pytest.raises(ValueError):
        ChannelParams(path_loss_exponent=0.0)
    with pytest.raises(ValueError):
        ChannelParams(noise_power=-1.0)
