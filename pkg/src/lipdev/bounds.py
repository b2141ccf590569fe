"""Deviation and moment bounds for ``S_n`` as pure functions of the constants.

Probability bounds are returned as :class:`BoundResult` with the split
``I_1`` (start term, driven by ``G_{X_1}``) plus ``I_2`` (martingale term),
clipped at one.  Each bound records its threshold convention:

* ``"x_Vn"``: ``P(+-S_n >= x V_n)`` (sub-Gaussian bound),
* ``"nx"``: ``P(+-S_n >= n x)`` (semi-exponential and Fuk-Nagaev bounds),
* ``"raw"``: ``P(|S_n| >= x)`` (weak von Bahr-Esseen bound).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import ConfigurationError, DomainError, k_rho


@dataclass
class BoundResult:
    name: str
    value: float
    i1: float | None = None
    i2: float | None = None
    clipped: bool = False
    convention: str | None = None
    unclipped: float | None = None
    inputs_echo: dict = field(default_factory=dict)
    flag: str | None = None


def _prob(name, i1, i2, convention, echo, flag=None):
    total = i1 + i2
    return BoundResult(name, min(1.0, total), i1, i2, total > 1.0, convention, total, echo, flag)


def _check_x(x):
    if not x > 0:
        raise DomainError("x must be positive")


def _k_or_one(k, rho):
    return k_rho(max(k, 0), rho)


# -- I_1 ------------------------------------------------------------------------

def i1_term(g_samples, a_n, x, n, rho):
    """Empirical ``P(G_{X_1}(X_1) >= a_n x / (2 K_{n-1}))``."""
    if not (x > 0 and a_n > 0):
        raise DomainError("x and a_n must be positive")
    g = getattr(g_samples, "values", g_samples)
    g = np.asarray(g, dtype=float)
    if g.size == 0 or not np.any(g > 0):
        return 0.0
    thr = a_n * x / (2.0 * k_rho(n - 1, rho))
    return float(np.mean(g >= thr))


def i1_markov_bound(C3, p, n, x, rho):
    """``(2 K_{n-1})^(p-1) C_3 / (n x)^(p-1)``, clipped at one."""
    _check_x(x)
    if C3 < 0:
        raise DomainError("C3 must be nonnegative")
    return min(1.0, (2.0 * k_rho(n - 1, rho)) ** (p - 1) * C3 / (n * x) ** (p - 1))


# -- sub-Gaussian ---------------------------------------------------------------------

def vn_sigma(h2_moments, n, rho):
    """``V_n^2 = sum_{k=2}^n K_{n-k}^2 E[H_k^2]`` and ``sigma_n^2 = V_n^2 / n``."""
    if n < 2:
        raise DomainError("n must be >= 2")
    v2 = 0.0
    for k in range(2, n + 1):
        if k not in h2_moments:
            raise ConfigurationError(f"missing E[H_k^2] for step k={k}")
        m = float(h2_moments[k])
        if m < 0:
            raise DomainError("second moments must be nonnegative")
        v2 += k_rho(n - k, rho) ** 2 * m
    return v2, v2 / n


def bound_subgaussian(n, x, rho, epsilon, v, i1=0.0, variant="sharp"):
    """``P(+-S_n >= x V_n) <= I_1 + exp{...}`` under the Bernstein moment condition."""
    _check_x(x)
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    v2, s2 = v
    echo = {"n": n, "x": x, "rho": rho, "epsilon": epsilon, "V2": v2, "sigma2": s2, "variant": variant,
            "threshold": x * math.sqrt(v2), "a_n": "V_n"}
    name = f"subgaussian_{variant}"
    if s2 <= 0:
        return _prob(name, i1, 0.0, "x_Vn", echo, flag="degenerate_sigma")
    K = _k_or_one(n - 2, rho)
    r = x * epsilon * K / math.sqrt(s2)
    if variant == "sharp":
        i2 = math.exp(-((x / 2) ** 2) / (1.0 + math.sqrt(1.0 + r) + r / 2.0))
    elif variant == "simple":
        i2 = math.exp(-((x / 2) ** 2) / (2.0 * (1.0 + r / 2.0)))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return _prob(name, i1, i2, "x_Vn", echo)


# -- semi-exponential ----------------------------------------------------------------

def semiexp_constant_C(alpha, x, rho, n, C1):
    """``C(alpha, x)``; it also depends on ``n`` and ``rho`` through ``K_{n-2}``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    _check_x(x)
    K = _k_or_one(n - 2, rho)
    t1 = K ** (2 * alpha) / (x ** (2 * alpha) * 4 ** (2 - 3 * alpha))
    t2 = 4 * K**2 / x**2 * (3 * (1 - alpha) / (2 * alpha)) ** ((1 - alpha) / alpha)
    return 2.0 + 35.0 * C1 * (t1 + t2)


def bound_semiexp(n, x, rho, alpha, C1, i1=0.0):
    """``P(+-S_n >= n x) <= I_1 + C(alpha, x) exp{-(x / (8 K_{n-2}))^(2 alpha) n^alpha}``."""
    C = semiexp_constant_C(alpha, x, rho, n, C1)
    K = _k_or_one(n - 2, rho)
    i2 = C * math.exp(-((x / (8 * K)) ** (2 * alpha)) * n**alpha)
    echo = {"n": n, "x": x, "rho": rho, "alpha": alpha, "C1": C1, "C": C, "threshold": n * x, "a_n": "n"}
    return _prob("semiexp", i1, i2, "nx", echo)


def bound_semiexp_cond(n, x, rho, alpha, C1, C2, i1=0.0):
    """Semi-exponential bound under conditions on ``L_k`` and ``H_k``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    _check_x(x)
    z = x / _k_or_one(n - 2, rho) / 2.0
    term1 = math.exp(-(z ** (1 + alpha)) / (2.0 * (1.0 + z / 3.0)) * n**alpha)
    term2 = (C1 + n * C2) * math.exp(-(z**alpha) * n**alpha)
    echo = {"n": n, "x": x, "rho": rho, "alpha": alpha, "C1": C1, "C2": C2, "threshold": n * x, "a_n": "n"}
    return _prob("semiexp_cond", i1, term1 + term2, "nx", echo)


# -- Fuk-Nagaev ---------------------------------------------------------------------

def fuk_nagaev_terms(n, x, rho, p, delta, C1, C2):
    """(exponential term, polynomial term) of the Fuk-Nagaev bound."""
    if p < 2 or delta <= 0:
        raise DomainError("need p >= 2 and delta > 0")
    _check_x(x)
    kinv = 1.0 / _k_or_one(n - 2, rho)
    q = p + delta
    expo = math.exp(-((kinv / 2) ** 2) / (2.0 * (n ** (-1.0 / q) / x + kinv / 6.0)) * (n * x) ** (delta / q))
    poly = (C1 + C2) / (n ** (p - 1) * x**p)
    return expo, poly


def bound_fuk_nagaev(n, x, rho, p, delta, C1, C2, i1=0.0):
    expo, poly = fuk_nagaev_terms(n, x, rho, p, delta, C1, C2)
    echo = {"n": n, "x": x, "rho": rho, "p": p, "delta": delta, "C1": C1, "C2": C2,
            "exp_term": expo, "poly_term": poly, "threshold": n * x, "a_n": "n"}
    return _prob("fuk_nagaev", i1, expo + poly, "nx", echo)


# -- weak von Bahr-Esseen ---------------------------------------------------------------

def vbe_constant(p):
    """``C_p = 4p/(p-1) + 8/(2-p)`` for ``1 < p < 2``."""
    if not 1 < p < 2:
        raise DomainError("p must lie strictly between 1 and 2")
    return 4 * p / (p - 1) + 8 / (2 - p)


def b_p(A, n, rho, p):
    """``B_p(n, rho) = sum_{k=2}^n K_{n-k}^p A_k``."""
    total = 0.0
    for k in range(2, n + 1):
        if k not in A:
            raise ConfigurationError(f"missing A_k for step k={k}")
        total += k_rho(n - k, rho) ** p * float(A[k])
    return total


def bound_weak_vbe(n, x, rho, p, A, i1=0.0):
    """``P(|S_n| >= x) <= 2 I_1(1, x) + 2^p C_p B_p / x^p``; ``i1`` is ``I_1(1, x)``."""
    Cp = vbe_constant(p)
    _check_x(x)
    B = b_p(A, n, rho, p)
    i2 = 2**p * Cp * B / x**p
    echo = {"n": n, "x": x, "rho": rho, "p": p, "Cp": Cp, "Bp": B, "threshold": x, "a_n": "1"}
    return _prob("weak_vbe", 2.0 * i1, i2, "raw", echo)


# -- moment bounds --------------------------------------------------------------------

def _a(A, k):
    return float(A.get(k, 0.0)) if k == 1 else float(A[k])


def moment_bound_mz(n, p, rho, A):
    """``||S_n||_p <= sqrt(K_{n-1}^2 A_1^(2/p) + (p-1) sum_{k>=2} K_{n-k}^2 A_k^(2/p))``."""
    if p < 2:
        raise DomainError("the MZ-type bound needs p >= 2")
    total = k_rho(n - 1, rho) ** 2 * _a(A, 1) ** (2 / p)
    total += (p - 1) * sum(k_rho(n - k, rho) ** 2 * _a(A, k) ** (2 / p) for k in range(2, n + 1))
    return math.sqrt(total)


def moment_bound_rosenthal(n, p, rho, A, L_bracket, Cp=None):
    """Bound on ``||S_n||_p^p``: ``C_p (L_bracket + sum_{k=1}^n K_{n-k}^p A_k)``.

    ``C_p`` defaults to ``2^p p^p``.
    """
    if p < 2:
        raise DomainError("the Rosenthal-type bound needs p >= 2")
    if Cp is None:
        Cp = 2.0**p * p**p
    s = sum(k_rho(n - k, rho) ** p * _a(A, k) for k in range(1, n + 1))
    return Cp * (L_bracket + s)


def moment_bound_vbe(n, p, rho, A):
    """Bound on ``||S_n||_p^p``: ``K_{n-1}^p A_1 + 2^(2-p) sum_{k>=2} K_{n-k}^p A_k``."""
    if not 1 < p <= 2:
        raise DomainError("the von Bahr-Esseen-type bound needs 1 < p <= 2")
    s = sum(k_rho(n - k, rho) ** p * _a(A, k) for k in range(2, n + 1))
    return k_rho(n - 1, rho) ** p * _a(A, 1) + 2 ** (2 - p) * s


def gar_step_moment(p, x_norm_p, a_norm_p, b_norm_p):
    """``4^(p-1)(||X_{k-1}||_p^p ||A_k||_p^p + ||B_k||_p^p)``."""
    return 4 ** (p - 1) * (x_norm_p**p * a_norm_p**p + b_norm_p**p)


def gar_corollary_moment(n, p, rho, moments, fixed_start=True):
    """Explicit ``||S_n||_p`` bound for GAR started at zero.

    ``moments`` maps ``k`` to ``(||X_{k-1}||_p, ||A_k||_p, ||B_k||_p)``.
    Step moments are chained into the MZ bound (``p >= 2``) or the von
    Bahr-Esseen bound (``1 < p < 2``) with every ``K_{n-k}`` replaced by
    ``1/(1 - rho)``.  Returns ``(bound on ||S_n||_p, echo)``; the echo holds
    the constant ``C(p, rho)`` of the resulting display

    * ``p >= 2``: ``||S_n||_p^p <= C (sum ||X||^2 ||A||^2 + sum ||B||^2)^(p/2)``,
      ``C = (p-1)^(p/2) 4^(p-1) / (1-rho)^p``;
    * ``p < 2``: ``||S_n||_p^p <= C (sum ||X||^p ||A||^p + sum ||B||^p)``,
      ``C = 2^(2-p) 4^(p-1) / (1-rho)^p``.
    """
    if not fixed_start:
        raise NotImplementedError("the GAR corollary assumes a fixed start X_1 = 0")
    if p <= 1:
        raise DomainError("p must exceed 1")
    K = 1.0 / (1.0 - rho)
    if p >= 2:
        # ||S||_p^2 <= (p-1) K^2 sum A_k^(2/p) and, as 2/p <= 1,
        # A_k^(2/p) <= 4^(2(p-1)/p) (|X|^2 |A|^2 + |B|^2)
        s = sum(moments[k][0] ** 2 * moments[k][1] ** 2 + moments[k][2] ** 2 for k in range(2, n + 1))
        C = (p - 1) ** (p / 2) * 4 ** (p - 1) * K**p
        pth = C * s ** (p / 2)
        shape = s
    else:
        s = sum(moments[k][0] ** p * moments[k][1] ** p + moments[k][2] ** p for k in range(2, n + 1))
        C = 2 ** (2 - p) * 4 ** (p - 1) * K**p
        pth = C * s
        shape = s
    return pth ** (1.0 / p), {"C_p_rho": C, "sum": shape, "p": p, "rho": rho, "K": K}


# -- Lemma-type check --------------------------------------------------------------------

def leedm_bound(x, y, v2, p_max_exceeds):
    """``exp{-x^2 / (2(v^2 + x y / 3))} + P(max xi > y)``."""
    if not (x > 0 and y > 0):
        raise DomainError("x and y must be positive")
    return math.exp(-(x**2) / (2.0 * (v2 + x * y / 3.0))) + p_max_exceeds


BOUNDS = {
    "subgaussian_sharp": "x_Vn",
    "subgaussian_simple": "x_Vn",
    "semiexp": "nx",
    "semiexp_cond": "nx",
    "fuk_nagaev": "nx",
    "weak_vbe": "raw",
}
MOMENT_BOUNDS = ("mz", "vbe", "rosenthal", "gar_corollary")
