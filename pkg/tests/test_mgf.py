import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from mimodelay.dof import DofChain, build_chain
from mimodelay.ge import GEParams
from mimodelay.mgf import (
    ConstantRateService,
    MarkovService,
    PeriodicSource,
    TandemService,
    compose_hops,
)
from mimodelay.sim import periodic_arrivals


def small_chain(rates=(0.0, 0.25, 0.5), p_gb=0.05, p_bg=0.3):
    return build_chain(GEParams(p_gb, p_bg), list(rates), 2)


def matrix_power_mgf(chain, theta, t):
    R = np.diag(np.exp(-theta * chain.rates))
    if t == 0:
        return 1.0
    M = np.linalg.matrix_power(chain.Q @ R, t - 1)
    return float(chain.pi @ R @ M @ np.ones(chain.k_states))


# Arrivals


@given(st.floats(0.1, 10), st.integers(1, 12), st.floats(1e-3, 3), st.integers(0, 60))
def test_periodic_mgf_matches_phase_enumeration(sigma, period, theta, t):
    src = PeriodicSource(sigma, period)
    # Average over every phase offset of the burst pattern in a window of t slots.
    vals = []
    for off in range(period):
        a = periodic_arrivals(src, t, off)
        vals.append(theta * a.sum())
    want = logsumexp(vals) - math.log(period)
    assert src.log_mgf(theta, t) == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_periodic_mgf_at_zero_is_one():
    assert PeriodicSource(4.0, 10).mgf(0.7, 0) == 1.0


@given(st.floats(0.1, 10), st.integers(1, 12), st.floats(1e-3, 3))
def test_periodic_envelope_dominates(sigma, period, theta):
    src = PeriodicSource(sigma, period)
    u = np.arange(200)
    log_c, g = src.log_envelope(theta)
    assert np.all(src.log_mgf(theta, u) <= log_c + g * u + 1e-12)


@given(
    st.floats(0.5, 8),
    st.integers(1, 7),
    st.floats(1e-3, 2),
    st.lists(st.floats(-30, 0), min_size=1, max_size=40),
)
def test_lagged_sums_match_direct_sum(sigma, period, theta, log_b):
    src = PeriodicSource(sigma, period)
    log_b = np.array(log_b)
    got = src.lagged_log_sums(theta, log_b)
    S = log_b.size - 1
    log_a = src.log_mgf(theta, np.arange(S + 1))
    for tau in range(S + 1):
        want = logsumexp([log_a[u] + log_b[tau + u] for u in range(S - tau + 1)])
        assert got[tau] == pytest.approx(want, rel=1e-10, abs=1e-10)


def test_fractional_period_uses_direct_path():
    src = PeriodicSource(3.0, 2.5)
    lb = -0.3 * np.arange(30.0)
    out = src.lagged_log_sums(0.2, lb)
    la = src.log_mgf(0.2, np.arange(30))
    assert out[5] == pytest.approx(logsumexp(la[:25] + lb[5:]))


# Service


@given(st.floats(0.01, 5), st.floats(1e-3, 2))
def test_constant_rate_closed_form(rate, theta):
    s = ConstantRateService(rate)
    seq = s.log_mgf_sequence(theta, 600)
    np.testing.assert_allclose(seq, -theta * rate * np.arange(601), rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("theta", [0.01, 0.3, 2.0])
def test_markov_mgf_matches_matrix_power(theta):
    chain = small_chain()
    s = MarkovService(chain)
    seq = s.log_mgf_sequence(theta, 700)
    for t in (0, 1, 2, 7, 255, 256, 257, 513, 700):
        assert math.exp(seq[t]) == pytest.approx(matrix_power_mgf(chain, theta, t), rel=1e-9)


def test_sequence_prefix_consistent_across_horizons():
    s = MarkovService(small_chain())
    long = s.log_mgf_sequence(0.5, 5000).copy()
    s2 = MarkovService(small_chain())
    short = s2.log_mgf_sequence(0.5, 300)
    np.testing.assert_allclose(long[:301], short, rtol=1e-12)


def test_markov_mgf_matches_trajectories():
    chain = small_chain()
    theta, n_traj, horizon = 0.3, 200_000, 20
    rng = np.random.default_rng(4)
    state = rng.choice(chain.k_states, size=n_traj, p=chain.pi)
    cum = np.zeros(n_traj)
    cdf = np.cumsum(chain.Q, axis=1)
    s = MarkovService(chain)
    for t in range(1, horizon + 1):
        cum += chain.rates[state]
        est = np.exp(-theta * cum).mean()
        assert est == pytest.approx(s.mgf(theta, t), rel=0.01)
        u = rng.random(n_traj)
        state = (u[:, None] > cdf[state]).sum(axis=1)


def test_tandem_is_convolution():
    a = MarkovService(small_chain())
    b = MarkovService(small_chain((0.0, 0.4, 0.6), 0.1, 0.2))
    c = ConstantRateService(0.35)
    theta = 0.4
    T = 60
    la, lb, lc = (m.log_mgf_sequence(theta, T).copy() for m in (a, b, c))
    ab = np.array([logsumexp([la[u] + lb[t - u] for u in range(t + 1)]) for t in range(T + 1)])
    abc = np.array([logsumexp([ab[u] + lc[t - u] for u in range(t + 1)]) for t in range(T + 1)])
    tan = compose_hops([a, b, c])
    assert isinstance(tan, TandemService) and tan.n_hops == 3
    np.testing.assert_allclose(tan.log_mgf_sequence(theta, T), abc, rtol=1e-10)


def test_single_hop_unchanged():
    s = MarkovService(small_chain())
    assert compose_hops([s]) is s


def test_first_order_capacities():
    chain = small_chain()
    s = MarkovService(chain)
    assert s.first_order_capacity() == pytest.approx(chain.pi @ chain.rates)
    tan = compose_hops([s, ConstantRateService(0.1)])
    assert tan.first_order_capacity() == pytest.approx(0.1)


@pytest.mark.parametrize("hops", [1, 2, 3])
@pytest.mark.parametrize("theta", [0.05, 0.5, 3.0])
def test_envelopes_dominate_sequence(hops, theta):
    s = compose_hops([MarkovService(small_chain()) for _ in range(hops)])
    T = 4000
    seq = s.log_mgf_sequence(theta, T)
    t = np.arange(T + 1)
    env = s.envelope(theta)
    from mimodelay.mgf import log_binom

    bound = env.log_c + log_binom(t + env.degree, env.degree) + env.log_lam * t
    assert np.all(seq <= bound + 1e-9)
    tail = s.tail_envelope(theta, 1000)
    tt = t[tail.start:]
    tb = tail.log_c + log_binom(tt + tail.degree, tail.degree) + tail.log_lam * tt
    assert np.all(seq[tail.start:] <= tb + 1e-9)


def test_zero_rate_class_chain():
    # A chain that can sit in an all-zero class keeps MGF bounded by one.
    chain = DofChain(np.array([0.5, 0.5]), np.array([[0.9, 0.1], [0.1, 0.9]]), np.array([0.0, 1.0]))
    seq = MarkovService(chain).log_mgf_sequence(1.0, 2000)
    assert np.all(seq <= 1e-12)
    assert np.all(np.diff(seq) <= 1e-12)


def test_unvisited_classes_do_not_inflate_envelope():
    # All paths pinned good: classes 0 and 1 have zero mass and identity rows.
    chain = build_chain(GEParams(0.0, 0.5), [0.0, 0.25, 0.5], 2)
    s = MarkovService(chain)
    env = s.envelope(0.7)
    assert env.log_lam == pytest.approx(-0.7 * 0.5)
    np.testing.assert_allclose(s.log_mgf_sequence(0.7, 50), -0.35 * np.arange(51), atol=1e-12)


def test_periodic_mgf_examples():
    src = PeriodicSource(4.0, 10)
    theta = 0.3
    assert src.mgf(theta, 10) == pytest.approx(math.exp(theta * 4.0))
    assert src.mgf(theta, 5) == pytest.approx(1 + 0.5 * (math.exp(theta * 4.0) - 1))
    big = src.log_mgf(50.0, 10**6)
    assert np.isfinite(big) and big == pytest.approx(50.0 * 4.0 * 10**5)


@given(st.floats(0.1, 10), st.integers(1, 12), st.floats(1e-4, 5))
def test_periodic_mgf_nondecreasing_and_rate_bound(sigma, period, theta):
    src = PeriodicSource(sigma, period)
    t = np.arange(1, 300)
    lm = src.log_mgf(theta, t)
    assert np.all(np.diff(lm) >= -1e-12)
    # (1 / theta t) log M_A(t) never drops below the mean rate.
    assert np.all(lm / (theta * t) >= src.rate * (1 - 1e-12))


def test_effective_bandwidth_tends_to_rate():
    src = PeriodicSource(4.0, 10)
    t = 10**6 + 3
    for theta in (1e-4, 0.1, 2.0):
        assert src.log_mgf(theta, t) / (theta * t) == pytest.approx(src.rate, rel=1e-4)


def test_service_mgf_first_slot_and_range():
    chain = small_chain()
    s = MarkovService(chain)
    theta = 0.8
    assert s.mgf(theta, 1) == pytest.approx(float(chain.pi @ np.exp(-theta * chain.rates)))
    assert s.mgf(theta, 0) == 1.0
    seq = s.log_mgf_sequence(theta, 100)
    assert np.all(seq <= 1e-15)


@given(st.floats(1e-3, 3), st.floats(1e-3, 3), st.integers(1, 300))
def test_service_mgf_nonincreasing_in_theta_and_rates(th1, th2, t):
    lo, hi = sorted((th1, th2))
    a = MarkovService(small_chain())
    faster = MarkovService(small_chain((0.0, 0.3, 0.6)))
    assert a.log_mgf(hi, t) <= a.log_mgf(lo, t) + 1e-12
    assert faster.log_mgf(lo, t) <= a.log_mgf(lo, t) + 1e-12


@given(st.floats(0.01, 3), st.floats(1e-3, 2), st.integers(0, 400))
def test_two_constant_hops_closed_form(rate, theta, t):
    tan = compose_hops([ConstantRateService(rate)] * 2)
    assert tan.log_mgf(theta, t) == pytest.approx(math.log(t + 1) - theta * rate * t, abs=1e-9)


def test_composition_is_associative():
    a = MarkovService(small_chain())
    b = MarkovService(small_chain((0.0, 0.4, 0.6), 0.1, 0.2))
    c = ConstantRateService(0.35)
    left = compose_hops([compose_hops([a, b]), c])
    right = compose_hops([a, compose_hops([b, c])])
    np.testing.assert_allclose(left.log_mgf_sequence(0.5, 800), right.log_mgf_sequence(0.5, 800),
                               rtol=1e-10)


def test_identical_hops_match_nested_sums():
    chain = small_chain()
    theta, T = 0.2, 80
    one = MarkovService(chain).log_mgf_sequence(theta, T).copy()
    acc = one.copy()
    for eta in range(2, 9):
        acc = np.array([logsumexp([acc[u] + one[t - u] for u in range(t + 1)]) for t in range(T + 1)])
        tan = compose_hops([MarkovService(chain) for _ in range(eta)])
        np.testing.assert_allclose(tan.log_mgf_sequence(theta, T), acc, rtol=1e-10, atol=1e-12)
