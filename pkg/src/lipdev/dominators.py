"""Samples of the dominating variables and the moment conditions built on them.

``H_k(x, y)`` is the mean displacement of one step when only the noise is
resampled, ``G_{X_1}(x)`` the mean distance from ``x`` to an independent copy
of the start and ``L_k(x) = E[H_k(x, Y)^2]``.  Families with closed forms are
evaluated exactly; otherwise the inner expectation is replaced by an average
over ``m_inner`` fresh noise draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .metrics import DomainError, k_rho_array
from .rng import as_policy

EXP_OVERFLOW = 700.0


@dataclass
class SampleSet:
    """Nonnegative samples of one dominating variable.

    ``states`` and ``noise`` keep the ``X_{k-1}`` and ``eps_k`` each value
    was computed at, when available.
    """

    values: np.ndarray
    k: int | None = None
    m_inner: int | None = None
    m_outer: int = 0
    seed: dict = field(default_factory=dict)
    exact: bool = True
    states: np.ndarray | None = None
    noise: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.m_outer == 0:
            self.m_outer = self.values.size
        if np.any(self.values < 0):
            raise ValueError("dominating samples must be nonnegative")

    def __len__(self):
        return self.values.size


@dataclass
class Estimate:
    """Point estimate with standard error and an optional warning flag."""

    value: float
    se: float = 0.0
    flag: str | None = None

    def upper(self, z=3.0):
        return self.value + z * self.se

    def __float__(self):
        return float(self.value)


# -- simulation helpers -------------------------------------------------------

def _simulate_to(model, k_last, policy, reps, stream):
    """States ``X_1..X_{k_last}`` and the noise used at each step."""
    from .mc import simulate_paths

    return simulate_paths(model, k_last, policy, reps, stream=stream, keep_noise=True)


def _inner_h_l(model, k, x, eps, m, policy, reps, want_l=False):
    """Inner Monte Carlo for ``H_k(x, eps)`` and, optionally, ``L_k(x)``.

    ``L`` uses leave-one-out averages over the inner draws so that no extra
    nesting level is needed.
    """
    R = np.shape(x)[0]
    u = policy.uniforms(f"inner/k={k}", reps[:, None], k, model.n_slots, sub=np.arange(m)[None, :])
    eps_in = model.draw(k, u.reshape(R * m, model.n_slots))
    x_rep = np.repeat(np.asarray(x, dtype=float), m, axis=0)
    y_in = model.step(k, x_rep, eps_in)
    y_in = y_in.reshape((R, m) + y_in.shape[1:])
    h = None
    if eps is not None:
        y = model.step(k, np.asarray(x, dtype=float), eps)
        h = model.metric(y[:, None, ...], y_in).mean(axis=1)
    l = None
    if want_l and model.metric.kind == "absolute" and y_in.ndim == 2:
        # sum_i |s_r - s_i| over sorted s from prefix sums
        s = np.sort(y_in, axis=1)
        c = np.cumsum(s, axis=1)
        r = np.arange(m)
        below = r * s - (c - s)
        above = (c[:, -1:] - c) - (m - 1 - r) * s
        hj = (below + above) / max(m - 1, 1)
        l = (hj**2).mean(axis=1)
    elif want_l:
        acc = np.zeros(R)
        for j in range(m):
            d = model.metric(y_in[:, j : j + 1, ...], y_in)
            hj = (d.sum(axis=1)) / max(m - 1, 1)
            acc += hj**2
        l = acc / m
    return h, l


def estimate_H(model, k, x, eps, m=256, seed=0, reps=None):
    """``H_k`` at states ``x`` (shape ``(R, ...)``) and outer draws ``eps``.

    Exact when the family has a closed form (``m`` is then ignored),
    otherwise an inner average over ``m`` independent noise draws.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    x = np.asarray(x, dtype=float)
    exact = model.h_exact(k, x, eps)
    if exact is not None:
        return np.asarray(exact, dtype=float)
    policy = as_policy(seed, "estimate_H")
    reps = np.arange(x.shape[0]) if reps is None else np.asarray(reps)
    return _inner_h_l(model, k, x, eps, m, policy, reps)[0]


def estimate_L_at(model, k, x, m=256, seed=0, reps=None):
    x = np.asarray(x, dtype=float)
    exact = model.l_exact(k, x)
    if exact is not None:
        return np.asarray(exact, dtype=float)
    policy = as_policy(seed, "estimate_L")
    reps = np.arange(x.shape[0]) if reps is None else np.asarray(reps)
    return _inner_h_l(model, k, x, None, m, policy, reps, want_l=True)[1]


def _seed_record(policy, stream):
    return {"master_seed": policy.master_seed, "experiment_id": policy.experiment_id, "stream": stream}


def sample_H(model, k, m_outer=4096, m_inner=256, seed=0):
    """``H_k(X_{k-1}, eps_k)`` at ``m_outer`` independently simulated states."""
    if k < 2:
        raise DomainError("H_k is defined for k >= 2")
    policy = as_policy(seed, "dominators")
    reps = np.arange(m_outer)
    states, noise = _simulate_to(model, k, policy, reps, "dominators/paths")
    x, eps = states[:, k - 2], noise[k]
    vals = estimate_H(model, k, x, eps, m_inner, policy, reps)
    exact = model.h_exact(k, x[:1], eps[:1]) is not None
    return SampleSet(vals, k, None if exact else m_inner, m_outer, _seed_record(policy, "dominators/paths"),
                     exact, states=x, noise=eps)


def estimate_G_init(model, m=4096, seed=0):
    """``G_{X_1}(X_1)`` over ``m`` draws of the starting state."""
    if m < 1:
        raise DomainError("m must be >= 1")
    policy = as_policy(seed, "dominators")
    states, _ = _simulate_to(model, 1, policy, np.arange(m), "dominators/paths")
    x1 = states[:, 0]
    return SampleSet(model.g_init(x1), 1, None, m, _seed_record(policy, "dominators/paths"), True, states=x1)


def estimate_L(model, k, m_outer=4096, m_inner=256, seed=0):
    """``L_k(X_{k-1})`` at ``m_outer`` simulated states."""
    if k < 2:
        raise DomainError("L_k is defined for k >= 2")
    policy = as_policy(seed, "dominators")
    reps = np.arange(m_outer)
    states, _ = _simulate_to(model, k - 1, policy, reps, "dominators/paths")
    x = states[:, k - 2]
    exact = model.l_exact(k, x[:1]) is not None
    vals = estimate_L_at(model, k, x, m_inner, policy, reps)
    return SampleSet(vals, k, None if exact else m_inner, m_outer, _seed_record(policy, "dominators/paths"),
                     exact, states=x)


# -- empirical functionals of samples --------------------------------------------

def _values(s):
    v = s.values if isinstance(s, SampleSet) else np.asarray(s, dtype=float)
    if v.size == 0:
        raise DomainError("empty sample")
    return v


def empirical_pnorm(s, p):
    """``((1/m) sum v_i^p)^(1/p)``."""
    if p < 1:
        raise DomainError("p must be >= 1")
    v = _values(s)
    return float(np.mean(v**p) ** (1.0 / p))


def empirical_weak_norm(s, p):
    """Plug-in ``sup_x x^p P(|Z| > x)`` for the empirical law.

    Just below each order statistic ``v`` the empirical survival function
    equals ``#{j: v_j >= v} / m``, so the supremum is the largest of
    ``v^p #{j: v_j >= v} / m``.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    v = np.sort(np.abs(_values(s)))
    m = v.size
    # number of samples >= v[i], ties included
    ge = m - np.searchsorted(v, v, side="left")
    return float(np.max(v**p * ge / m))


def weak_norm_estimate(s, p, n_boot=200, seed=0):
    """:func:`empirical_weak_norm` with a bootstrap standard error."""
    v = _values(s)
    point = empirical_weak_norm(v, p)
    rng = as_policy(seed, "weak_norm").generator(f"boot/p={p}")
    boots = [empirical_weak_norm(v[rng.integers(0, v.size, v.size)], p) for _ in range(n_boot)]
    return Estimate(point, float(np.std(boots, ddof=1)))


def moment_estimate(s, p):
    """``E[v^p]`` with its standard error."""
    v = _values(s) ** p
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return Estimate(float(v.mean()), se)


def exp_moment_estimate(s, gamma, kappa=1.0):
    """``(1/m) sum exp{kappa v_i^gamma}``.

    If any exponent exceeds 700 the estimate is flagged ``"overflow"`` (the
    exponential moment condition is presumed violated) and reported as
    ``inf`` rather than raising.
    """
    if gamma <= 0 or kappa <= 0:
        raise DomainError("gamma and kappa must be positive")
    arg = kappa * _values(s) ** gamma
    if np.any(arg > EXP_OVERFLOW):
        return Estimate(math.inf, math.inf, "overflow")
    e = np.exp(arg)
    se = float(e.std(ddof=1) / math.sqrt(e.size)) if e.size > 1 else 0.0
    return Estimate(float(e.mean()), se)


def bernstein_epsilon(s, l_max=20, inflate=0.0):
    """Smallest ``eps`` with ``E H^l <= l!/2 eps^(l-2) (l-1)^(-l/2) E H^2`` for ``l <= l_max``.

    With ``inflate = z`` the moments of order ``l >= 3`` are raised and the
    second moment lowered by ``z`` standard errors before solving.
    """
    if l_max < 2:
        raise DomainError("l_max must be >= 2")
    v = _values(s)
    m2 = moment_estimate(v, 2)
    denom = m2.value - inflate * m2.se
    if not m2.value > 0:
        raise DomainError("all-zero sample: the Bernstein condition is degenerate")
    if denom <= 0:
        denom = m2.value
    eps = 0.0
    for l in range(3, l_max + 1):
        ml = moment_estimate(v, l)
        num = ml.value + inflate * ml.se
        if num <= 0:
            continue
        log_ratio = math.log(2.0 * num / denom) + 0.5 * l * math.log(l - 1) - special.gammaln(l + 1)
        eps = max(eps, math.exp(log_ratio / (l - 2)))
    return eps


# -- per-path bank ------------------------------------------------------------------

class DominatorBank:
    """One batch of simulated paths with ``G``, ``H_k`` and ``L_k`` along each.

    Everything a bound needs at horizon ``n`` (per-step moments, weak norms,
    path sums of ``L_k``) is read from the first ``n`` steps of the bank, so
    a single simulation to the largest horizon serves every ``n``.
    """

    def __init__(self, model, n_max, m_outer=4096, m_inner=256, seed=0, want_l=True):
        if n_max < 2:
            raise DomainError("bank needs n_max >= 2")
        self.model = model
        self.n_max = int(n_max)
        self.m_outer = int(m_outer)
        self.m_inner = int(m_inner)
        self.policy = as_policy(seed, "dominators")
        reps = np.arange(self.m_outer)
        states, noise = _simulate_to(model, self.n_max, self.policy, reps, "bank/paths")
        self.G = np.asarray(model.g_init(states[:, 0]), dtype=float)
        self.H = np.empty((self.m_outer, self.n_max + 1))
        self.L = np.full((self.m_outer, self.n_max + 1), np.nan)
        self.H[:, :2] = np.nan
        self.exact = True
        for k in range(2, self.n_max + 1):
            x = states[:, k - 2]
            h = model.h_exact(k, x, noise[k])
            l = model.l_exact(k, x) if want_l else None
            if h is None or (want_l and l is None):
                self.exact = False
                h_mc, l_mc = _inner_h_l(model, k, x, noise[k], self.m_inner, self.policy, reps, want_l)
                h = h if h is not None else h_mc
                l = l if l is not None else l_mc
            self.H[:, k] = h
            if want_l:
                self.L[:, k] = l
        self.states = states

    def h(self, k):
        return self.H[:, k]

    def steps(self, n):
        return range(2, min(n, self.n_max) + 1)

    def seed_record(self):
        return _seed_record(self.policy, "bank/paths")

    # moment conditions, each returned as an Estimate (sup over steps where relevant)
    def sup_over_steps(self, n, fn):
        best = None
        for k in self.steps(n):
            e = fn(self.H[:, k])
            if best is None or e.upper() > best.upper():
                best = e
        return best

    def h2_moments(self, n, z=0.0):
        return {k: moment_estimate(self.H[:, k], 2).upper(z) for k in self.steps(n)}

    def epsilon(self, n, l_max=20, inflate=3.0):
        return max(bernstein_epsilon(self.H[:, k], l_max, inflate) for k in self.steps(n))

    def A(self, n, p, weak=False):
        """Per-step ``A_k(p)`` estimates (strong or weak moments), ``k = 2..n``."""
        out = {}
        for k in self.steps(n):
            out[k] = weak_norm_estimate(self.H[:, k], p, seed=self.policy) if weak else moment_estimate(self.H[:, k], p)
        return out

    def A1(self, p, weak=False):
        if not np.any(self.G > 0):
            return Estimate(0.0, 0.0)
        return weak_norm_estimate(self.G, p, seed=self.policy) if weak else moment_estimate(self.G, p)

    def l_mean(self, n):
        """Path averages ``(1/n) sum_{k=2}^n L_k(X_{k-1})``."""
        return np.nansum(self.L[:, 2 : n + 1], axis=1) / n

    def l_bracket(self, n, rho, p, A1_2=0.0):
        """``E[(K_{n-1}^2 A_1(2) + sum_k K_{n-k}^2 L_k(X_{k-1}))^(p/2)]``."""
        ks = np.arange(2, n + 1)
        K2 = k_rho_array(n - ks, rho) ** 2
        inner = k_rho_array(n - 1, rho) ** 2 * A1_2 + self.L[:, 2 : n + 1] @ K2
        return moment_estimate(inner, p / 2.0)
