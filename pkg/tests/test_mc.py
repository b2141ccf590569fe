import math

import numpy as np
import pytest
from scipy import stats

from lipdev import ARCH, GAR
from lipdev.bounds import BoundResult
from lipdev.functionals import Functional
from lipdev.mc import (
    ConventionError, SimulatedSum, TailEstimate, clopper_pearson, compare_bound_vs_empirical, estimate_moment,
    estimate_tail, simulate_chain, simulate_paths, simulate_sum,
)
from lipdev.models import GenericModel
from lipdev.laws import Gaussian
from lipdev.rng import RngPolicy

RAD = {"kind": "rademacher"}
PLAIN = Functional("plain_sum")


def test_simulate_chain_deterministic():
    m = GAR(A=0.5, B=0.0, initial=8.0)
    np.testing.assert_array_equal(simulate_chain(m, 4, 0, RngPolicy(0, "t")), [8.0, 4.0, 2.0, 1.0])


def test_simulate_chain_reproducible():
    m = ARCH(0.5, 1.0, {"kind": "gaussian"})
    a = simulate_chain(m, 20, 3, RngPolicy(9, "t"))
    b = simulate_chain(m, 20, 3, RngPolicy(9, "t"))
    np.testing.assert_array_equal(a, b)


def test_simulate_paths_vector_shape():
    m = GAR(A=0.5, B=RAD, dim=3, initial=[0.0, 0.0, 0.0])
    assert simulate_paths(m, 5, RngPolicy(0, "t"), np.arange(7)).shape == (7, 5, 3)


def test_step_failure_names_step_and_replication():
    from lipdev.mc import SimulationError

    def bad(k, x, e):
        if k == 3:
            raise ValueError("boom")
        return 0.5 * x + e[..., 0]

    m = GenericModel(bad, Gaussian(0, 1), rho=0.5)
    with pytest.raises(SimulationError, match="k=3"):
        simulate_paths(m, 4, RngPolicy(0, "t"), np.arange(5))


def test_clopper_pearson_against_scipy():
    lo, hi = clopper_pearson(7, 100, 0.95)
    ci = stats.binomtest(7, 100).proportion_ci(0.95, method="exact")
    assert lo == pytest.approx(ci.low) and hi == pytest.approx(ci.high)
    assert clopper_pearson(0, 100)[0] == 0.0 and clopper_pearson(100, 100)[1] == 1.0


def test_impossible_event():
    m = GAR(A=0.0, B=RAD)
    (est,) = estimate_tail(m, PLAIN, 10, [11.0], 2000, RngPolicy(0, "t"), sides=("plus",))
    assert est.estimate == 0.0 and est.ci_high < 1.0


def test_all_heads_probability():
    # ten Rademacher summands: P(S = 10) = 2^-10
    m = GAR(A=0.0, B=RAD, initial=RAD)
    (est,) = estimate_tail(m, PLAIN, 10, [10.0], 100000, RngPolicy(1, "t"), sides=("plus",))
    assert est.ci_low <= 2.0**-10 <= est.ci_high


def test_zero_threshold_sanity():
    m = ARCH(0.5, 1.0, {"kind": "gaussian"})
    (est,) = estimate_tail(m, PLAIN, 8, [0.0], 1000, RngPolicy(1, "t"), sides=("plus",))
    assert 0.0 <= est.estimate <= 1.0


def test_moment_deterministic_chain():
    m = GAR(A=0.5, B=1.0, initial=2.0)
    est = estimate_moment(m, PLAIN, 6, 2, 200, RngPolicy(0, "t"))
    assert est.value == 0.0


def test_moment_ten_rademachers():
    m = GAR(A=0.0, B=RAD, initial=RAD)
    sim = simulate_sum(m, PLAIN, 10, 50000, RngPolicy(2, "t"))
    est = sim.moment(2)
    assert est.ci_low <= math.sqrt(10) <= est.ci_high
    assert est.value == pytest.approx(math.sqrt(np.mean(sim.values**2)))


def test_centring_uses_independent_batch():
    sim = SimulatedSum(np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0]), 3)
    np.testing.assert_array_equal(sim.values, [-1.0, 0.0, 1.0])
    assert sim.mean_se == 0.0
    t = sim.tail(1.0, "plus")
    assert t.count == 1 and t.estimate == pytest.approx(1 / 3)
    assert sim.tail(1.0, "minus").count == 1
    assert sim.tail(1.0, "abs").count == 2


def test_worker_count_does_not_change_values():
    m = ARCH(0.5, 1.0, {"kind": "gaussian"})
    a = simulate_sum(m, PLAIN, 6, 20000, RngPolicy(4, "t"), workers=1)
    b = simulate_sum(m, PLAIN, 6, 20000, RngPolicy(4, "t"), workers=4)
    np.testing.assert_array_equal(a.values, b.values)


def _est(hi, conv="raw"):
    return TailEstimate(1.0, 0, 100, 0.0, 0.0, hi, "plus", conv)


def test_comparison_rules():
    assert compare_bound_vs_empirical(BoundResult("b", 1.0, convention="raw"), _est(0.7)).dominated
    c = compare_bound_vs_empirical(BoundResult("b", 0.0, convention="raw"), _est(0.1))
    assert not c.dominated
    c = compare_bound_vs_empirical(BoundResult("b", 0.3, convention="raw"), _est(0.3))
    assert c.dominated and c.margin == 0.0


def test_convention_mismatch():
    with pytest.raises(ConventionError):
        compare_bound_vs_empirical(BoundResult("b", 1.0, convention="nx"), _est(0.1, "x_Vn"))
