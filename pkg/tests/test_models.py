import math

import numpy as np
import pytest

from lipdev import ARCH, GAR, INAR1, GenericModel, GLMGarchPoisson, GLMPoisson, SwitchingARCH, model_from_dict, verify_contraction
from lipdev.laws import Gaussian
from lipdev.models import ModelError, NonContractiveError, UnsupportedError
from lipdev.rng import RngPolicy

RAD = {"kind": "rademacher"}


def _u(model, R=20000, k=2, seed=0):
    return RngPolicy(seed, "models").uniforms("u", np.arange(R), k, model.n_slots)


def test_arch_step_b_only():
    m = ARCH(0.5, 1.0, RAD)
    assert float(m.step(2, np.array([0.0]), np.array([[1.0]]))[0]) == 1.0


def test_gar_deterministic_step():
    m = GAR(A=0.5, B=2.0)
    assert float(m.step(2, np.array([4.0]), np.array([[0.5, 2.0]]))[0]) == 4.0


def test_inar_zero_state():
    m = INAR1({"kind": "poisson", "lam": 1.0}, {"kind": "bernoulli", "q": 0.3})
    assert float(m.step(2, np.array([0.0]), np.array([[3.0, 0.99]]))[0]) == 3.0


def test_inar_negative_state_rejected():
    m = INAR1({"kind": "poisson", "lam": 1.0}, {"kind": "bernoulli", "q": 0.3})
    with pytest.raises(ModelError):
        m.step(2, np.array([-1.0]), np.array([[0.0, 0.5]]))


@pytest.mark.parametrize(
    "model,rho",
    [
        (ARCH(0.5, 1.0, RAD), 0.5),
        (INAR1({"kind": "poisson", "lam": 1.0}, {"kind": "bernoulli", "q": 0.3}), 0.3),
        (GAR(A={"kind": "uniform", "a": 0.0, "b": 0.8}, B=RAD), 0.4),
        (GLMPoisson(1.0, 0.4), 0.4),
    ],
)
def test_certificates(model, rho):
    assert model.certificate.rho == pytest.approx(rho)
    assert model.certificate.derivation == "model_formula"


def test_non_contractive_rejected():
    with pytest.raises(NonContractiveError):
        GAR(A=1.2, B=RAD).certificate


def test_alpha_power_certificate():
    m = model_from_dict({"family": "arch", "a": 0.25, "b": 1.0, "noise": RAD, "alpha": 0.5})
    assert m.certificate.rho == pytest.approx(0.5)


def test_switching_weights_regimes():
    m = SwitchingARCH(0.4, 1.0, 0.1, 1.0, RAD, q=0.3)
    assert m.certificate.rho == pytest.approx(0.3 * 0.4 + 0.7 * 0.1)


def test_glm_garch_certificate():
    m = GLMGarchPoisson(1.0, 0.3, 0.4, weight=2.0)
    assert m.certificate.rho == pytest.approx(max(0.3, 0.4 / 2.0) * 3.0)


def test_hk_gar_example():
    m = GAR(A={"kind": "uniform", "a": -math.sqrt(0.75), "b": math.sqrt(0.75)}, B=RAD)
    assert m.A(2).abs_moment(2) == pytest.approx(0.25)
    assert m.hk_moment_upper(2, 2, x_moment=1.0) == pytest.approx(5.0)


def test_hk_arch_degenerate():
    m = ARCH(0.0, 1.0, RAD)
    assert m.hk_moment_upper(2, 2, scale_moment=1.0) == pytest.approx(2.0)


def test_hk_glm_unit_intensity():
    m = GLMPoisson(1.0, 0.0)
    assert m.hk_moment_upper(2, 2, x_samples=np.zeros(5)) == pytest.approx(4.0)


def test_hk_generic_unsupported():
    m = GenericModel(lambda k, x, e: 0.5 * x + e[..., 0], Gaussian(0, 1), rho=0.5)
    with pytest.raises(UnsupportedError):
        m.hk_moment_upper(2, 2)


def _mc_h_moment(model, k, p, x, R=4000, m=400):
    rng = RngPolicy(3, "hk")
    eps = model.draw(k, rng.uniforms("o", np.arange(R), k, model.n_slots))
    xs = model.broadcast_state(x, R)
    y = model.step(k, xs, eps)
    inner = model.draw(k, rng.uniforms("i", np.arange(m), k, model.n_slots))
    h = np.array([np.mean(model.metric(model.broadcast_state(yi, m) if model.state_dim > 1 else yi,
                                        model.step(k, model.broadcast_state(xi, m), inner)))
                  for yi, xi in zip(y, xs)])
    return float(np.mean(h**p))


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize(
    "model,x",
    [
        (ARCH(0.5, 1.0, {"kind": "gaussian"}), 1.5),
        (GAR(A={"kind": "uniform", "a": -0.5, "b": 0.5}, B={"kind": "uniform", "a": -1, "b": 1}), 2.0),
        (INAR1({"kind": "poisson", "lam": 1.0}, {"kind": "bernoulli", "q": 0.4}), 3.0),
        (GLMPoisson(1.0, 0.4), 2.0),
        (SwitchingARCH(0.4, 1.0, 0.1, 0.5, {"kind": "gaussian"}, 0.5), 1.0),
    ],
    ids=["arch", "gar", "inar", "glm", "switching"],
)
def test_hk_moment_upper_dominates_monte_carlo(model, x, p):
    bound = model.hk_moment_upper(2, p, x_samples=np.array([x]))
    assert _mc_h_moment(model, 2, p, x, R=1500, m=300) <= bound * 1.02


@pytest.mark.parametrize(
    "model",
    [
        ARCH(0.5, 1.0, RAD),
        ARCH(0.5, 1.0, {"kind": "gaussian"}),
        GAR(A={"kind": "uniform", "a": 0.0, "b": 0.8}, B={"kind": "gaussian"}),
        INAR1({"kind": "poisson", "lam": 2.0}, {"kind": "poisson", "lam": 0.5}),
        GLMPoisson(0.5, 0.6),
        GLMGarchPoisson(1.0, 0.3, 0.4),
        SwitchingARCH(0.4, 1.0, 0.1, 1.0, RAD, q=0.3),
    ],
)
def test_contraction_holds_on_random_pairs(model):
    rng = np.random.default_rng(0)
    if model.state_dim == 1:
        pts = rng.uniform(0, 6, size=(20, 2))
        if model.family == "inar1":
            pts = np.floor(pts)
        pairs = [(a, b) for a, b in pts]
    else:
        pairs = [(rng.uniform(0, 5, 2), rng.uniform(0, 5, 2)) for _ in range(20)]
    reps = verify_contraction(model, 2, pairs, m=2048)
    assert sum(not r.passed for r in reps) <= 1


def test_exact_h_matches_inner_monte_carlo():
    from lipdev.dominators import _inner_h_l

    model = INAR1({"kind": "poisson", "lam": 1.5}, {"kind": "bernoulli", "q": 0.4})
    x = np.array([0.0, 2.0, 5.0])
    eps = np.array([[1.0, 0.3], [0.0, 0.8], [2.0, 0.5]])
    exact = model.h_exact(2, x, eps)
    mc, _ = _inner_h_l(model, 2, x, eps, 40000, RngPolicy(1, "h"), np.arange(3))
    np.testing.assert_allclose(mc, exact, atol=0.03)


def test_model_from_dict_families():
    assert model_from_dict({"family": "gar_vector", "A": 0.5, "B": RAD}).certificate.rho == 0.5
    with pytest.raises(ModelError):
        model_from_dict({"family": "zebra"})
    v = model_from_dict({"family": "gar_vector", "dim": 2, "A": 0.5, "B": RAD,
                         "matrix": [[0.5, 0.2], [0.1, 0.3]], "initial": [0.0, 0.0]})
    assert v.certificate.rho == pytest.approx(0.5 * 0.6)
