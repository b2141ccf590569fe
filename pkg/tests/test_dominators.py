import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lipdev import ARCH, GAR, INAR1
from lipdev.dominators import (
    DominatorBank, bernstein_epsilon, empirical_pnorm, empirical_weak_norm, estimate_G_init, estimate_H,
    estimate_L, exp_moment_estimate, moment_estimate, sample_H, weak_norm_estimate,
)
from lipdev.metrics import DomainError

RAD = {"kind": "rademacher"}


def test_estimate_H_arch_rademacher():
    m = ARCH(0.5, 1.0, RAD)
    x = np.array([0.0, 1.0, -3.0])
    eps = np.array([[1.0], [-1.0], [1.0]])
    np.testing.assert_allclose(estimate_H(m, 2, x, eps), np.sqrt(0.25 * x**2 + 1.0))


def test_estimate_H_point_masses():
    m = GAR(A=0.5, B=2.0)
    assert np.all(estimate_H(m, 2, np.array([1.0, 5.0]), np.array([[0.5, 2.0], [0.5, 2.0]])) == 0.0)


def test_estimate_H_inar_bernoulli_immigration():
    m = INAR1({"kind": "bernoulli", "q": 0.3}, {"kind": "bernoulli", "q": 0.5})
    h = estimate_H(m, 2, np.array([0.0]), np.array([[1.0, 0.5]]))
    assert float(h[0]) == pytest.approx(0.7)


def test_sample_H_independent_rademacher():
    s = sample_H(GAR(A=0.0, B=RAD), 3, m_outer=64)
    assert s.exact and np.all(s.values == 1.0)


def test_sample_H_point_mass_noise():
    s = sample_H(GAR(A=0.5, B=1.0), 3, m_outer=32)
    assert np.all(s.values == 0.0)


def test_sample_H_arch_fixed_start():
    s = sample_H(ARCH(0.5, 1.0, RAD), 2, m_outer=50)
    np.testing.assert_allclose(s.values, 1.0)


def test_sample_H_falls_back_to_inner_monte_carlo():
    m = GAR(A={"kind": "uniform", "a": -0.5, "b": 0.5}, B=RAD)
    s = sample_H(m, 3, m_outer=40, m_inner=64)
    assert not s.exact and s.m_inner == 64
    assert np.all(s.values > 0)


@pytest.mark.parametrize(
    "initial,expected",
    [(0.0, [0.0]), (RAD, [1.0]),
     ({"kind": "categorical", "values": [0, 1, 2], "probs": [1 / 3, 1 / 3, 1 / 3]}, [1.0, 2 / 3, 1.0])],
)
def test_G_init(initial, expected):
    m = GAR(A=0.5, B=RAD, initial=initial)
    g = estimate_G_init(m, m=300)
    assert set(np.round(g.values, 12)) <= set(np.round(expected, 12))


def test_estimate_L_examples():
    np.testing.assert_allclose(estimate_L(GAR(A=0.0, B=RAD), 3, m_outer=32).values, 1.0)
    np.testing.assert_allclose(estimate_L(GAR(A=0.5, B=1.0), 3, m_outer=32).values, 0.0)
    np.testing.assert_allclose(estimate_L(ARCH(0.5, 1.0, RAD), 2, m_outer=32).values, 1.0)


def test_estimate_L_inner_monte_carlo_matches_exact():
    # E|c - B'| = (1 + c^2) / 2 for B uniform on [-1, 1], so L = E[(1 + B^2)^2] / 4
    oracle = (1 + 2 / 3 + 1 / 5) / 4
    arch = ARCH(0.5, 1.0, {"kind": "uniform", "a": -1.0, "b": 1.0}, initial=2.0)
    assert arch.l_exact(2, np.array([2.0]))[0] == pytest.approx(2.0 * oracle)
    gar = GAR(A={"kind": "uniform", "a": 0.0, "b": 1e-9}, B={"kind": "uniform", "a": -1.0, "b": 1.0})
    mc = estimate_L(gar, 2, m_outer=8, m_inner=4000).values
    np.testing.assert_allclose(mc, oracle, rtol=0.03)


@pytest.mark.parametrize("vals,p,expected", [([1, 1, 1], 3, 1.0), ([0, 2], 2, math.sqrt(2)), ([1, 2, 3], 1, 2.0)])
def test_empirical_pnorm(vals, p, expected):
    assert empirical_pnorm(np.array(vals, float), p) == pytest.approx(expected)


@pytest.mark.parametrize("vals,p,expected", [([3, 3, 3], 2, 9.0), ([0, 0], 2, 0.0), ([1, 2], 1, 1.0)])
def test_empirical_weak_norm(vals, p, expected):
    assert empirical_weak_norm(np.array(vals, float), p) == pytest.approx(expected)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=40), st.floats(1, 4))
def test_weak_norm_at_most_strong(vals, p):
    v = np.array(vals)
    assert empirical_weak_norm(v, p) <= np.mean(v**p) * (1 + 1e-12) + 1e-300


def test_weak_norm_estimate_has_se():
    v = np.abs(np.random.default_rng(0).standard_normal(500))
    e = weak_norm_estimate(v, 2)
    assert e.value == empirical_weak_norm(v, 2) and e.se > 0


def test_exp_moments():
    assert exp_moment_estimate(np.zeros(5), 1.0).value == 1.0
    assert exp_moment_estimate(np.ones(5), 1.0).value == pytest.approx(math.e)
    assert exp_moment_estimate(np.array([0.0, 1.0]), 2.0).value == pytest.approx((1 + math.e) / 2)
    e = exp_moment_estimate(np.array([1e4]), 1.0)
    assert e.flag == "overflow" and math.isinf(e.value)


def test_bernstein_constant_sample():
    assert bernstein_epsilon(np.ones(10), l_max=3) == pytest.approx(2 * 2**1.5 / 6, rel=1e-12)
    assert bernstein_epsilon(np.ones(10), l_max=2) == 0.0


def test_bernstein_grid_oracle():
    v = np.r_[np.zeros(9), 1.0]
    for l_max in (3, 6, 12):
        eps = bernstein_epsilon(v, l_max)
        grid = np.linspace(0, 5, 50001)
        ok = np.ones_like(grid, dtype=bool)
        m2 = np.mean(v**2)
        for l in range(3, l_max + 1):
            ok &= np.mean(v**l) <= 0.5 * math.factorial(l) * grid ** (l - 2) * (l - 1) ** (-l / 2) * m2 + 1e-15
        assert eps == pytest.approx(grid[np.argmax(ok)], abs=2e-4)


@settings(max_examples=30)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=30).filter(lambda v: max(v) > 1e-3))
def test_bernstein_monotone_in_lmax(vals):
    v = np.array(vals)
    eps = [bernstein_epsilon(v, l) for l in range(2, 9)]
    assert all(b >= a - 1e-12 for a, b in zip(eps, eps[1:]))


def test_bernstein_all_zero():
    with pytest.raises(DomainError):
        bernstein_epsilon(np.zeros(4))


def test_moment_estimate():
    e = moment_estimate(np.array([1.0, 3.0]), 2)
    assert e.value == 5.0 and e.upper(0) == 5.0


def test_bank_prefix_consistency():
    m = GAR(A=0.5, B=RAD)
    bank = DominatorBank(m, 6, m_outer=128, seed=1)
    assert bank.exact
    np.testing.assert_allclose(bank.h(4), 1.0)
    np.testing.assert_allclose(bank.l_mean(6), 5.0 / 6.0)
    assert list(bank.steps(4)) == [2, 3, 4]
