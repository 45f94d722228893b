import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbe.errors import DomainError, InvalidParameter
from vbe.verify import (CheckResult, OptimismCheckConfig, TabularMDP, bonus_decay_curve,
                        bonus_log_term, check_bonus_decomposition, check_fixed_point,
                        dp_policy_eval, ensemble_slowdown_ratio, min_bonus_scale, optimism_rate,
                        optimism_samples, random_mdp, report_csv, rqf_expected_reward,
                        telescoping_gap, z_value)


def _two_state():
    # s0 -a0-> s1 (discount 0.5), s1 -a0-> terminal
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    disc = np.zeros((2, 1, 2))
    disc[0, 0, 1] = 0.5
    return TabularMDP(P, np.array([[1.0], [2.0]]), disc, np.ones((2, 1)))


def test_mdp_validation():
    with pytest.raises(InvalidParameter):
        TabularMDP(np.full((2, 1, 2), 0.6), np.zeros((2, 1)), 0.9, np.ones((2, 1)))
    with pytest.raises(InvalidParameter):
        TabularMDP(np.full((2, 1, 2), 0.5), np.zeros((2, 1)), 0.9, np.full((2, 1), 0.5))


def test_policy_eval_hand_example():
    q = dp_policy_eval(_two_state())
    np.testing.assert_allclose(q, [[1.0 + 0.5 * 2.0], [2.0]])


def test_rqf_reward_hand_example():
    f = np.array([[2.0], [1.0]])
    r = rqf_expected_reward(_two_state(), f)
    np.testing.assert_allclose(r, [[1.5], [1.0]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8), st.integers(1, 4), st.booleans())
def test_target_is_fixed_point_of_its_reward(seed, n_states, n_actions, det):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_states, n_actions, terminal_prob=0.2, deterministic=det)
    f = rng.normal(size=(n_states, n_actions))
    assert check_fixed_point(mdp, f) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 80))
def test_telescoping_sum(seed, length):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 2, terminal_prob=0.1)
    f = rng.normal(size=(4, 2))
    assert telescoping_gap(mdp, f, rng, length) < 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_bonus_decomposition(seed, k):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 3, terminal_prob=0.1)
    shape = (k, 5, 3)
    assert check_bonus_decomposition(mdp, rng.normal(size=shape), rng.normal(size=shape)) < 1e-9


def test_decomposition_zero_when_predictor_equals_target():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 4, 2)
    f = rng.normal(size=(2, 4, 2))
    # bonus is exactly 0; the decomposition is 0 up to rounding
    assert check_bonus_decomposition(mdp, f, f) < 1e-12


def test_policy_eval_rejects_undiscounted_loop():
    P = np.ones((1, 1, 1))
    with pytest.raises(DomainError):
        dp_policy_eval(TabularMDP(P, np.ones((1, 1)), 1.0, np.ones((1, 1))), max_iter=100)


# -- optimism threshold ----------------------------------------------------

def test_z_value_reference_points():
    assert z_value(0.5) == pytest.approx(0.0, abs=1e-12)
    assert z_value(0.025) == pytest.approx(-1.959964, abs=1e-6)
    with pytest.raises(DomainError):
        z_value(0.0)


def test_min_bonus_scale_hand_value():
    n, k, delta = 64, 20, 0.05
    d = math.log(10) - math.log(math.log(40))
    numer = math.sqrt(64 / math.pi) * (1 + 1.959964 / 8)
    assert min_bonus_scale(n, k, delta, 1.0, "proof") == pytest.approx(numer / math.sqrt(d), rel=1e-6)
    assert min_bonus_scale(n, k, delta, 1.0, "statement") == pytest.approx(numer / d, rel=1e-6)


def test_min_bonus_scale_domain():
    assert bonus_log_term(2, 0.1) < 0
    with pytest.raises(DomainError):
        min_bonus_scale(64, 2, 0.1, 1.0)
    with pytest.raises(InvalidParameter):
        min_bonus_scale(64, 20, 0.1, 1.0, "corollary")


def test_optimism_config_needs_enough_trials():
    with pytest.raises(InvalidParameter):
        OptimismCheckConfig(64, 8, 0.05, trials=100)
    assert OptimismCheckConfig(64, 8, 0.05).sigma == pytest.approx(math.sqrt(0.05 * 0.95 / 1e5))


def test_optimism_samples_marginals():
    n = 64
    q, gap = optimism_samples(n, 1, 40_000, np.random.default_rng(0))
    # q ~ N(0, 1/n); |f* - f| with k=1 is half-normal of variance 2/n
    assert abs(q.std() - 1 / 8) < 0.003
    assert abs(gap.mean() - math.sqrt(2 / n) * math.sqrt(2 / math.pi)) < 0.003


def test_optimism_rate_monotone_in_c():
    q, gap = optimism_samples(64, 8, 5000, np.random.default_rng(1))
    rates = [optimism_rate(q, gap, c, 1.0) for c in (0.0, 5.0, 20.0, 80.0)]
    assert rates == sorted(rates) and rates[0] < 0.01 and rates[-1] > 0.99


# -- bonus decay -----------------------------------------------------------

def test_equal_init_starts_at_zero():
    assert bonus_decay_curve(updates=10, checkpoints=(0,), init_equal=True)[0] == 0.0


def test_bonus_decays_on_fixed_policy_chain():
    curve = bonus_decay_curve(updates=20_000, checkpoints=(0, 1000))
    assert curve[20_000] < curve[1000] < curve[0]
    assert curve[20_000] < 1e-2


def test_doubling_ensemble_needs_double_updates():
    ratio = ensemble_slowdown_ratio(k=1, updates=2000, seeds=range(3))
    assert 0.5 < ratio < 1.5


def test_report_csv_verdicts():
    text = report_csv([CheckResult("a", 0.1, 1.0, True), CheckResult("b", 2.0, 1.0, False),
                       CheckResult("c", 2.0, 1.0, False, flagged=True)])
    assert text.splitlines() == ["check,statistic,threshold,verdict", "a,0.1,1,pass",
                                 "b,2,1,fail", "c,2,1,flagged"]
