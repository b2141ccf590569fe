import math

import numpy as np
import pytest

from lipdev import ARCH, GAR
from lipdev.functionals import Functional
from lipdev.martingale import (
    check_leedm1, check_martingale_property, check_prop21, decompose_batch, decompose_path, estimate_gk,
    prop21_violations, telescoping_gap,
)

RAD = {"kind": "rademacher"}
PLAIN = Functional("plain_sum")


def test_gk_full_path():
    m = ARCH(0.5, 1.0, RAD)
    path = np.array([0.0, 1.0, -1.2])
    assert estimate_gk(m, PLAIN, 3, path) == pytest.approx(path.sum())


def test_gk_deterministic_continuation():
    m = GAR(A=0.5, B=0.0)
    assert estimate_gk(m, PLAIN, 3, np.array([1.0, 2.0])) == pytest.approx(4.0)


def test_gk_affine_closed_form_and_nested():
    m = GAR(A=0.5, B=RAD)
    assert estimate_gk(m, PLAIN, 3, np.array([1.0, 2.0])) == pytest.approx(4.0, abs=1e-12)
    nested = estimate_gk(m, PLAIN, 3, np.array([1.0, 2.0]), m_future=20000, method="nested")
    assert nested == pytest.approx(4.0, abs=0.03)


def test_affine_increment():
    batch = decompose_batch(GAR(A=0.5, B=RAD), PLAIN, 3, 200, seed=1)
    np.testing.assert_allclose(np.abs(batch.M[:, 1]), 1.5)
    assert set(np.sign(batch.M[:, 1])) == {-1.0, 1.0}


def test_point_mass_noise_gives_zero_increments():
    batch = decompose_batch(GAR(A=0.5, B=1.0, initial=3.0), PLAIN, 5, 20)
    np.testing.assert_allclose(batch.M, 0.0)


def test_fixed_start_m1_zero():
    p = decompose_path(ARCH(0.5, 1.0, RAD), PLAIN, 4, m_future=200)
    assert p.increments[0] == 0.0


def test_random_start_m1_dominated_by_G():
    m = GAR(A=0.5, B=RAD, initial={"kind": "uniform", "a": -1.0, "b": 1.0})
    report = check_prop21(m, PLAIN, 6, 2000)
    assert report["exact"] and report["total"] == 0


def test_prop21_equality_case():
    report = check_prop21(GAR(A=0.5, B=RAD), PLAIN, 8, 2000)
    assert report["exact"] and report["total"] == 0


def test_prop21_point_mass():
    assert check_prop21(GAR(A=0.5, B=1.0), PLAIN, 6, 50)["total"] == 0


def test_prop21_flags_violation():
    batch = decompose_batch(GAR(A=0.5, B=RAD), PLAIN, 4, 50)
    batch.H[:, 2] *= 0.5
    assert prop21_violations(batch)["per_k"][3] == 50


def test_telescoping():
    batch = decompose_batch(GAR(A=0.5, B=RAD, initial=RAD), PLAIN, 6, 100)
    assert telescoping_gap(batch) < 1e-12


def test_martingale_property_affine():
    batch = decompose_batch(GAR(A=0.5, B={"kind": "uniform", "a": -1, "b": 1}), PLAIN, 6, 4000, seed=3)
    assert check_martingale_property(batch)["passed"]


def test_martingale_property_detects_drift():
    batch = decompose_batch(GAR(A=0.5, B=RAD), PLAIN, 4, 4000, seed=3)
    batch.M[:, 2] += 0.3
    assert not check_martingale_property(batch)["passed"]


def _rademacher_increments(R=200000, n=10, seed=0):
    rng = np.random.default_rng(seed)
    return rng.choice([-1.0, 1.0], size=(R, n))


def test_leedm1_huge_x():
    r = check_leedm1(_rademacher_increments(1000), x=100.0, y=1.5, v=math.sqrt(10))
    assert r["lhs"] == 0.0 and r["passed"]


def test_leedm1_binomial_example():
    r = check_leedm1(_rademacher_increments(), x=4.0, y=1.5, v=math.sqrt(10))
    assert r["exp_term"] == pytest.approx(math.exp(-16 / 24), rel=1e-12)
    assert r["max_term"] == 0.0
    assert abs(r["lhs"] - 176 / 1024) < 0.005
    assert r["passed"]


def test_leedm1_zero_variance():
    r = check_leedm1(_rademacher_increments(1000), x=1.0, y=1.5, v=0.0)
    assert r["lhs"] == 0.0 and r["passed"]
