"""Doob decomposition ``g_k = E[f | F_k]``, ``M_k = g_k - g_{k-1}``.

For scalar GAR chains and the plain sum the conditional expectations are
affine in the current state and computed exactly.  Everything else uses
nested Monte Carlo: ``m_future`` continuations per prefix, with the
continuation noise of replication ``j`` at step ``s`` shared by every ``k``
so that consecutive ``g_k`` are evaluated on common random numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dominators import estimate_H
from .mc import clopper_pearson, simulate_paths
from .metrics import ConfigurationError, DomainError, k_rho
from .models import GAR
from .rng import as_policy

MAX_NESTED_N = 12
ROUNDOFF = 1e-9


def _affine(model, f):
    return isinstance(model, GAR) and model.state_dim == 1 and f.kind == "plain_sum"


def _affine_coeffs(model, n):
    """``w_k`` and ``c_k`` with ``g_k = sum_{i<k} x_i + w_k x_k + c_k``.

    ``w_n = 1``, ``w_k = 1 + mu_{k+1} w_{k+1}`` and ``c_k = sum_{i>k} beta_i w_i``
    where ``mu_i = E A_i`` and ``beta_i = E B_i``.
    """
    mu = {i: model.A(i).mean() for i in range(2, n + 1)}
    beta = {i: model.B[0](i).mean() for i in range(2, n + 1)}
    w = {n: 1.0}
    c = {n: 0.0}
    for k in range(n - 1, 0, -1):
        w[k] = 1.0 + mu[k + 1] * w[k + 1]
        c[k] = c[k + 1] + beta[k + 1] * w[k + 1]
    return w, c


def affine_gk(model, n, prefix):
    """Closed-form ``g_k`` for the plain sum of a scalar GAR chain."""
    prefix = np.asarray(prefix, dtype=float)
    k = prefix.shape[-1]
    w, c = _affine_coeffs(model, n)
    return prefix[..., :-1].sum(axis=-1) + w[k] * prefix[..., -1] + c[k]


def affine_g0(model, n):
    w, c = _affine_coeffs(model, n)
    init = model.initial
    m1 = float(init[0]) if isinstance(init, np.ndarray) else init.mean()
    return w[1] * m1 + c[1]


def _run_future(model, f, n, k, x, acc, policy, reps, subs):
    """Push states ``x`` (flat) from step ``k + 1`` to ``n`` and accumulate ``f``."""
    for s in range(k + 1, n + 1):
        u = policy.uniforms("future", reps, s, model.n_slots, sub=subs)
        x = model.step(s, x, model.draw(s, u))
        acc = f.update(acc, x, model.metric)
    return acc


def _initial_draws(model, policy, reps, subs):
    """Fresh draws of ``X_1``, independent of the observed paths."""
    return model.sample_initial(policy.uniforms("future", reps, 1, model.state_dim, sub=subs))


def _continue(model, f, n, k, xk, acc, policy, path_ids, m):
    """Values of ``f`` over ``m`` continuations after prefix length ``k``.

    ``xk`` and ``acc`` (prefix accumulator) have leading size ``R``; the
    result has shape ``(R, m)``.
    """
    R = np.shape(xk)[0]
    x = np.repeat(np.asarray(xk, dtype=float), m, axis=0)
    a = np.repeat(np.asarray(acc, dtype=float), m, axis=0)
    reps = np.tile(np.arange(m), R)
    subs = np.repeat(np.asarray(path_ids), m)
    return _run_future(model, f, n, k, x, a, policy, reps, subs).reshape(R, m)


def estimate_gk(model, f, n, prefix, m_future=1000, seed=0, method="auto", path_id=0):
    """``E[f(X_1..X_n) | X_1..X_k = prefix]``.

    ``method="auto"`` uses the affine closed form when available and nested
    Monte Carlo otherwise; ``"nested"`` forces simulation.
    """
    return nested_gk(model, f, n, prefix, m_future, seed, method, path_id)[0]


def nested_gk(model, f, n, prefix, m_future=1000, seed=0, method="auto", path_id=0):
    """Like :func:`estimate_gk` but returns ``(value, standard error)``."""
    prefix = np.asarray(prefix, dtype=float)
    if model.state_dim == 1:
        prefix = prefix.reshape(-1)
    k = prefix.shape[0]
    if not 1 <= k <= n:
        raise DomainError("prefix length must lie in 1..n")
    if k == n:
        return f.evaluate(prefix, model.metric, model.state_dim), 0.0
    if method == "auto" and _affine(model, f):
        return float(affine_gk(model, n, prefix)), 0.0
    if f.kind == "custom":
        raise ConfigurationError("nested estimation needs a built-in functional")
    policy = as_policy(seed, "martingale")
    acc = f.start(prefix[:1], model.metric)
    for i in range(1, k):
        acc = f.update(acc, prefix[i : i + 1], model.metric)
    vals = _continue(model, f, n, k, prefix[k - 1 : k], acc, policy, [path_id], m_future)[0]
    se = float(vals.std(ddof=1) / math.sqrt(m_future)) if m_future > 1 else 0.0
    return float(vals.mean()), se


@dataclass
class DecompositionBatch:
    """Decompositions of ``R`` paths; arrays are indexed ``[path, k]``.

    ``g`` has columns ``g_0..g_n``; ``M``, ``H`` and ``M_se`` have columns
    ``k = 1..n`` stored at index ``k - 1``.  ``H[:, 0]`` holds ``G_{X_1}(X_1)``.
    """

    paths: np.ndarray
    g: np.ndarray
    M: np.ndarray
    M_se: np.ndarray
    H: np.ndarray
    n: int
    exact: bool
    rho: float

    def path(self, r):
        return DecompositionPath(self.paths[r], self.M[r], self.g[r], self.H[r], self.n)


@dataclass
class DecompositionPath:
    path: np.ndarray
    increments: np.ndarray
    g: np.ndarray
    dominators: np.ndarray
    n: int


def decompose_batch(model, f, n, replications, m_future=1000, seed=0, method="auto", m_inner=256):
    if n < 2:
        raise DomainError("n must be >= 2")
    if m_future < 1:
        raise DomainError("m_future must be >= 1")
    policy = as_policy(seed, "martingale")
    R = int(replications)
    ids = np.arange(R)
    paths, noise = simulate_paths(model, n, policy, ids, stream="lab/paths", keep_noise=True)
    rho = model.certificate.rho

    H = np.empty((R, n))
    H[:, 0] = model.g_init(paths[:, 0])
    for k in range(2, n + 1):
        H[:, k - 1] = estimate_H(model, k, paths[:, k - 2], noise[k], m_inner, policy.child("martingale/inner"), ids)

    g = np.empty((R, n + 1))
    M_se = np.zeros((R, n))
    g[:, n] = f.evaluate(paths, model.metric, model.state_dim)
    exact = method == "auto" and _affine(model, f)
    if exact:
        for k in range(1, n):
            g[:, k] = affine_gk(model, n, paths[:, :k])
        g[:, 0] = affine_g0(model, n)
    else:
        if n > MAX_NESTED_N:
            raise DomainError(f"nested decomposition is capped at n <= {MAX_NESTED_N}")
        if f.kind == "custom":
            raise ConfigurationError("nested estimation needs a built-in functional")
        acc = f.start(paths[:, 0], model.metric)
        # continuation values for the current level, shape (R, m)
        level = {}
        for k in range(1, n):
            if k > 1:
                acc = f.update(acc, paths[:, k - 1], model.metric)
            level[k] = _continue(model, f, n, k, paths[:, k - 1], acc, policy, ids, m_future)
            g[:, k] = level[k].mean(axis=1)
        level[n] = np.repeat(g[:, n : n + 1], m_future, axis=1)
        if model.fixed_start:
            level[0] = level[1]
        else:
            reps = np.tile(np.arange(m_future), R)
            subs = np.repeat(ids, m_future)
            x1 = _initial_draws(model, policy, reps, subs)
            a0 = f.start(x1, model.metric)
            level[0] = _run_future(model, f, n, 1, x1, a0, policy, reps, subs).reshape(R, m_future)
        g[:, 0] = level[0].mean(axis=1)
        for k in range(1, n + 1):
            d = level[k] - level[k - 1]
            M_se[:, k - 1] = d.std(axis=1, ddof=1) / math.sqrt(m_future) if m_future > 1 else 0.0
    M = np.diff(g, axis=1)
    return DecompositionBatch(paths, g, M, M_se, H, n, exact, rho)


def decompose_path(model, f, n, m_future=1000, seed=0, method="auto", path_index=0):
    """Decomposition of a single simulated path."""
    batch = decompose_batch(model, f, n, path_index + 1, m_future, seed, method)
    return batch.path(path_index)


def prop21_violations(batch, z=3.0):
    """Count ``|M_k| > K_{n-k}(rho) H_k`` (``k = 1`` uses ``G_{X_1}`` and ``K_{n-1}``).

    Exact batches tolerate only roundoff; nested batches flag a sample only
    when the excess exceeds ``z`` standard errors of ``M_k``.
    """
    n, rho = batch.n, batch.rho
    K = np.array([k_rho(n - 1, rho)] + [k_rho(n - k, rho) for k in range(2, n + 1)])
    bound = batch.H * K
    excess = np.abs(batch.M) - bound
    tol = ROUNDOFF * (1.0 + bound) if batch.exact else z * batch.M_se + ROUNDOFF * (1.0 + bound)
    viol = excess > tol
    return {
        "m1": int(viol[:, 0].sum()),
        "per_k": {k: int(viol[:, k - 1].sum()) for k in range(2, n + 1)},
        "max_excess": float(np.max(excess - tol)),
        "tolerance": "roundoff" if batch.exact else f"{z:g} SE",
    }


def check_prop21(model, f, n, replications, m_future=1000, seed=0, method="auto"):
    batch = decompose_batch(model, f, n, replications, m_future, seed, method)
    out = prop21_violations(batch)
    out["replications"] = int(replications)
    out["exact"] = batch.exact
    out["total"] = out["m1"] + sum(out["per_k"].values())
    return out


def telescoping_gap(batch):
    """``max |g_n - g_0 - sum_k M_k|`` over paths."""
    return float(np.max(np.abs(batch.g[:, -1] - batch.g[:, 0] - batch.M.sum(axis=1))))


def check_martingale_property(batch, n_bins=8, z=4.0):
    """Binned check of ``E[M_k | F_{k-1}] = 0`` using quantile bins of ``X_{k-1}``.

    A bin passes when ``|mean| <= z sd / sqrt(count)``.  The report also
    carries the bin means against the cruder ``z / sqrt(R)`` yardstick.
    """
    R, n = batch.M.shape
    per_k = {}
    ok = True
    for k in range(2, n + 1):
        x = batch.paths[:, k - 2]
        x = x if x.ndim == 1 else x[:, 0]
        m = batch.M[:, k - 1]
        edges = np.unique(np.quantile(x, np.linspace(0, 1, n_bins + 1)))
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, max(len(edges) - 2, 0))
        rows = []
        for b in np.unique(idx):
            mb = m[idx == b]
            mean = float(mb.mean())
            sd = float(mb.std(ddof=1)) if mb.size > 1 else 0.0
            lim = z * sd / math.sqrt(mb.size)
            passed = abs(mean) <= lim + ROUNDOFF
            ok &= passed
            rows.append({"count": int(mb.size), "mean": mean, "limit": lim, "passed": passed,
                         "plain_limit": z / math.sqrt(R)})
        per_k[k] = rows
    return {"passed": bool(ok), "per_k": per_k}


def check_leedm1(samples, x, y, v, cond_var=None, level=0.999):
    """Empirical check of ``P(Z_n >= x, <Z>_n <= v^2) <= exp{-x^2/(2(v^2+xy/3))} + P(max xi > y)``.

    ``samples`` holds martingale increments, one path per row.  The
    predictable variation ``<Z>_n`` uses ``cond_var`` (conditional variances
    per increment) if given; otherwise the column means of ``xi^2``, which is
    exact for independent increments.  The check passes when the upper
    confidence limit of the left side is at most the exponential term plus
    the upper confidence limit of ``P(max xi > y)``.
    """
    xi = np.asarray(samples, dtype=float)
    if not (x > 0 and y > 0 and v >= 0):
        raise DomainError("need x, y > 0 and v >= 0")
    R = xi.shape[0]
    z = xi.sum(axis=1)
    if cond_var is None:
        qv = np.full(R, (xi**2).mean(axis=0).sum())
    else:
        qv = np.asarray(cond_var, dtype=float).sum(axis=1)
    lhs_count = int(np.sum((z >= x) & (qv <= v * v)))
    max_count = int(np.sum(xi.max(axis=1) > y))
    expo = math.exp(-(x**2) / (2.0 * (v * v + x * y / 3.0)))
    lhs_hi = clopper_pearson(lhs_count, R, level)[1]
    max_hi = clopper_pearson(max_count, R, level)[1]
    return {
        "lhs": lhs_count / R,
        "lhs_upper": lhs_hi,
        "exp_term": expo,
        "max_term": max_count / R,
        "max_term_upper": max_hi,
        "bound": expo + max_count / R,
        "passed": bool(lhs_hi <= expo + max_hi),
        "replications": R,
    }
