import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from mimodelay.bound import (
    DelayBound,
    Infeasible,
    NonConvergent,
    SolverConfig,
    delay_bound,
    stability_margin,
)
from mimodelay.dof import build_chain
from mimodelay.ge import GEParams
from mimodelay.mgf import ConstantRateService, MarkovService, PeriodicSource, compose_hops

from oracles import exact_log_f, oracle_delay


def constant_rate_log_f(src, rate, theta, tau):
    # Pure closed form for a constant-rate server, independent of any matrix code.
    p = int(src.period)
    j = np.arange(p)
    w = np.log(src.mgf(theta, j)) - theta * rate * j
    geo = theta * (src.sigma - rate * p)
    if geo >= 0:
        return math.inf
    return -theta * rate * tau + float(np.log(np.exp(w).sum())) - math.log(-math.expm1(geo))


def test_constant_rate_oracle_agrees_with_linear_solve():
    src = PeriodicSource(4.0, 10)
    s = ConstantRateService(0.5)
    for theta in (0.01, 0.3, 2.0):
        for tau in (0, 3, 17):
            assert exact_log_f(src, s.system(theta), theta, tau) == pytest.approx(
                constant_rate_log_f(src, 0.5, theta, tau), rel=1e-10
            )


@settings(max_examples=25)
@given(
    st.floats(0.5, 8.0),
    st.integers(1, 12),
    st.floats(1.05, 3.0),
    st.sampled_from([1e-1, 1e-3, 1e-6, 1e-9]),
)
def test_constant_rate_matches_exact_evaluation(sigma, period, headroom, eps):
    src = PeriodicSource(sigma, period)
    rate = headroom * src.rate
    s = ConstantRateService(rate)
    tau, gap = oracle_delay(src, s, eps)
    assume(gap > 1e-7)
    b = delay_bound(src, s, eps)
    assert b.d == tau
    assert constant_rate_log_f(src, rate, b.theta_star, b.d) <= math.log(eps) + 1e-9


MARKOV_CASES = [
    ((0.0, 0.25, 0.5), 0.05, 0.3, 3.0, 10, 1e-3),
    ((0.0, 0.25, 0.5), 0.01, 0.1, 3.0, 10, 1e-6),
    ((0.0, 0.4, 0.8), 0.2, 0.2, 2.0, 5, 1e-4),
    ((0.0, 0.2, 0.5), 0.02, 0.05, 2.5, 7, 1e-2),
]


@pytest.mark.parametrize("rates,p_gb,p_bg,sigma,period,eps", MARKOV_CASES)
def test_markov_matches_exact_evaluation(rates, p_gb, p_bg, sigma, period, eps):
    s = MarkovService(build_chain(GEParams(p_gb, p_bg), list(rates), 2))
    src = PeriodicSource(sigma, period)
    tau, gap = oracle_delay(src, s, eps)
    assert gap > 1e-7
    b = delay_bound(src, s, eps)
    assert b.d == tau
    assert exact_log_f(src, s.system(b.theta_star), b.theta_star, b.d) <= math.log(eps) + 1e-9


@pytest.mark.parametrize("hops", [2, 3])
def test_tandem_matches_exact_evaluation(hops):
    chain = build_chain(GEParams(0.05, 0.3), [0.0, 0.25, 0.5], 2)
    s = compose_hops([MarkovService(chain) for _ in range(hops)])
    src = PeriodicSource(3.0, 10)
    tau, gap = oracle_delay(src, s, 1e-3)
    assert gap > 1e-7
    assert delay_bound(src, s, 1e-3).d == tau


def test_result_fields():
    b = delay_bound(PeriodicSource(4.0, 10), ConstantRateService(0.5), 1e-6, slot_us=31.0)
    assert isinstance(b, DelayBound) and b.feasible
    assert b.d_slots == b.d
    assert b.d_ms == pytest.approx(0.031 * b.d)
    assert 0 <= b.tail_error <= 1e-6 * 1e-6
    assert b.log_value <= math.log(1e-6)


def test_infeasible_when_rate_exceeds_capacity():
    src = PeriodicSource(6.0, 10)
    s = ConstantRateService(0.5)
    assert stability_margin(src, s) < 0
    with pytest.raises(Infeasible):
        delay_bound(src, s, 1e-3)
    with pytest.raises(Infeasible):
        delay_bound(PeriodicSource(5.0, 10), s, 1e-3)


def test_bad_epsilon():
    with pytest.raises(ValueError):
        delay_bound(PeriodicSource(4.0, 10), ConstantRateService(0.5), 1.5)


def test_nonconvergent_when_horizon_too_short():
    chain = build_chain(GEParams(0.001, 0.002), [0.0, 0.25, 0.5], 2)
    s = MarkovService(chain)
    cfg = SolverConfig(initial_horizon=16, t_max=64, tau_max=32)
    with pytest.raises((NonConvergent, Infeasible)):
        delay_bound(PeriodicSource(3.0, 10), s, 1e-6, cfg)


@settings(max_examples=20)
@given(st.floats(1.05, 3.0), st.floats(0.1, 1.0))
def test_monotone_in_epsilon_and_rate(headroom, bump):
    src = PeriodicSource(4.0, 10)
    r = headroom * src.rate
    d_loose = delay_bound(src, ConstantRateService(r), 1e-2).d
    d_tight = delay_bound(src, ConstantRateService(r), 1e-6).d
    d_fast = delay_bound(src, ConstantRateService(r * (1 + bump)), 1e-6).d
    assert d_loose <= d_tight
    assert d_fast <= d_tight


def test_zero_arrivals_give_one_slot():
    # f(0) contains Mbar(0) = 1 > eps, so the smallest certified tau is 1.
    assert delay_bound(PeriodicSource(0.0, 10), ConstantRateService(2.0), 1e-3).d == 1


def test_listed_constant_rate_example():
    src = PeriodicSource(10.0, 10)
    s = ConstantRateService(2.0)
    tau, gap = oracle_delay(src, s, 1e-6)
    assert gap > 1e-7
    assert delay_bound(src, s, 1e-6).d == tau


def test_stability_margin():
    chain = build_chain(GEParams(0.05, 0.3), [0.0, 0.25, 0.5], 2)
    m = MarkovService(chain)
    cap = chain.first_order_capacity
    assert stability_margin(PeriodicSource(0.0, 10), m) == pytest.approx(cap)
    tan = compose_hops([m, ConstantRateService(0.3)])
    assert stability_margin(PeriodicSource(2.0, 10), tan) == pytest.approx(min(cap, 0.3) - 0.2)


@settings(max_examples=15)
@given(st.floats(1.01, 2.0))
def test_scaling_rates_up_never_increases_d(scale):
    chain = build_chain(GEParams(0.05, 0.3), [0.0, 0.25, 0.5], 2)
    src = PeriodicSource(3.0, 10)
    d = delay_bound(src, MarkovService(chain), 1e-4).d
    d_up = delay_bound(src, MarkovService(chain.with_rates(chain.rates * scale)), 1e-4).d
    assert d_up <= d


@pytest.mark.parametrize("eps", [1e-3, 1e-6])
def test_denser_theta_grid_changes_d_by_at_most_one(eps):
    chain = build_chain(GEParams(0.01, 0.1), [0.0, 0.2473, 0.4935], 2)
    src = PeriodicSource(4.0225, 10)
    d64 = delay_bound(src, MarkovService(chain), eps).d
    d128 = delay_bound(src, MarkovService(chain), eps, SolverConfig(n_theta=128)).d
    assert abs(d128 - d64) <= 1


def test_tighter_epsilon_never_smaller_for_markov():
    chain = build_chain(GEParams(0.01, 0.1), [0.0, 0.2473, 0.4935], 2)
    src = PeriodicSource(4.0225, 10)
    s = MarkovService(chain)
    assert delay_bound(src, s, 1e-6).d >= delay_bound(src, s, 1e-3).d
