"""Deterministic Monte Carlo for ``S_n = f(X_1..X_n) - E f``.

Every replication owns its counter-based streams, so results depend only on
``(master_seed, experiment_id, stream, replication)`` and never on how
replications are split across blocks or workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .metrics import DomainError
from .models import ModelError
from .rng import as_policy

BLOCK = 8192
TAIL_LEVEL = 0.999
MEAN_INFLATION = 4.0


class SimulationError(RuntimeError):
    """A model step failed; the message carries the step and replication."""


class ConventionError(ValueError):
    """A bound and an estimate use different threshold normalisations."""


def simulate_paths(model, n, policy, reps, stream="paths", keep_noise=False):
    """States ``X_1..X_n`` for each replication in ``reps``.

    Returns an array of shape ``(R, n)`` (scalar chains) or ``(R, n, d)``;
    with ``keep_noise`` also a dict ``k -> eps_k``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    reps = np.asarray(reps)
    x = model.sample_initial(policy.uniforms(stream, reps, 1, model.state_dim))
    states = [x]
    noise = {}
    for k in range(2, n + 1):
        eps = model.draw(k, policy.uniforms(stream, reps, k, model.n_slots))
        x = _checked_step(model, k, x, eps, reps)
        states.append(x)
        if keep_noise:
            noise[k] = eps
    out = np.stack(states, axis=1)
    return (out, noise) if keep_noise else out


def _checked_step(model, k, x, eps, reps):
    try:
        return model.step(k, x, eps)
    except (ModelError, ValueError) as exc:
        for i in range(len(reps)):
            try:
                model.step(k, x[i : i + 1], eps[i : i + 1])
            except (ModelError, ValueError):
                raise SimulationError(f"step k={k}, replication {int(reps[i])}: {exc}") from exc
        raise SimulationError(f"step k={k}: {exc}") from exc


def simulate_chain(model, n, rep, policy, stream="paths"):
    """One path ``X_1..X_n`` for replication index ``rep``."""
    return simulate_paths(model, n, as_policy(policy), np.array([rep]), stream)[0]


def functional_values(model, f, n, policy, reps, stream):
    """``f`` on the paths of ``reps``; built-in functionals never store paths."""
    reps = np.asarray(reps)
    if not f.streaming:
        paths = simulate_paths(model, n, policy, reps, stream)
        return f.evaluate(paths, model.metric, model.state_dim)
    if f.kind == "plain_sum" and model.state_dim > 1:
        raise DomainError("plain_sum needs scalar states")
    x = model.sample_initial(policy.uniforms(stream, reps, 1, model.state_dim))
    acc = f.start(x, model.metric)
    for k in range(2, n + 1):
        eps = model.draw(k, policy.uniforms(stream, reps, k, model.n_slots))
        x = _checked_step(model, k, x, eps, reps)
        acc = f.update(acc, x, model.metric)
    return acc


def _blocked(fn, R, workers):
    blocks = [np.arange(s, min(s + BLOCK, R)) for s in range(0, R, BLOCK)]
    if workers <= 1 or len(blocks) == 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, blocks))  # map keeps submission order
    return np.concatenate(parts)


def clopper_pearson(count, R, level=TAIL_LEVEL):
    """Exact two-sided binomial interval for ``count`` successes out of ``R``."""
    count = np.asarray(count, dtype=float)
    a = 1.0 - level
    safe_lo = np.maximum(count, 1.0)
    safe_hi = np.minimum(count, R - 1.0)
    lo = np.where(count > 0, stats.beta.ppf(a / 2, safe_lo, R - safe_lo + 1), 0.0)
    hi = np.where(count < R, stats.beta.ppf(1 - a / 2, safe_hi + 1, R - safe_hi), 1.0)
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


@dataclass
class TailEstimate:
    threshold: float
    count: int
    R: int
    estimate: float
    ci_low: float
    ci_high: float
    side: str
    convention: str = "raw"
    level: float = TAIL_LEVEL


@dataclass
class MomentEstimate:
    p: float
    value: float
    ci_low: float
    ci_high: float
    R: int
    level: float


class SimulatedSum:
    """Centred values ``S = f - mean`` from two independent batches.

    The mean comes from one batch (stream ``mean/...``) and the tail values
    from another (stream ``tail/...``); tail intervals inflate the threshold
    by ``4 SE(mean)`` so that the centring error is covered.
    """

    def __init__(self, f_tail, f_mean, n, seed_record=None):
        self.n = n
        self.raw = np.asarray(f_tail, dtype=float)
        self.R = self.raw.size
        f_mean = np.asarray(f_mean, dtype=float)
        self.mean = float(f_mean.mean())
        self.mean_se = float(f_mean.std(ddof=1) / math.sqrt(f_mean.size)) if f_mean.size > 1 else 0.0
        self.values = self.raw - self.mean
        self.seed_record = seed_record or {}
        self._sorted = {}

    def _side(self, side):
        if side not in self._sorted:
            v = {"plus": self.values, "minus": -self.values, "abs": np.abs(self.values)}[side]
            self._sorted[side] = np.sort(v)
        return self._sorted[side]

    def count_at_least(self, t, side):
        s = self._side(side)
        return int(s.size - np.searchsorted(s, t, side="left"))

    def tail(self, t, side="plus", convention="raw", level=TAIL_LEVEL):
        slack = MEAN_INFLATION * self.mean_se
        count = self.count_at_least(t, side)
        hi_count = self.count_at_least(t - slack, side)
        lo_count = self.count_at_least(t + slack, side)
        ci_high = clopper_pearson(hi_count, self.R, level)[1]
        ci_low = clopper_pearson(lo_count, self.R, level)[0]
        return TailEstimate(float(t), count, self.R, count / self.R, ci_low, ci_high, side, convention, level)

    def moment(self, p, n_boot=200, level=0.99, seed=0):
        """Plug-in ``||S||_p`` with a bootstrap percentile interval."""
        if p <= 1:
            raise DomainError("p must exceed 1")
        a = np.abs(self.values) ** p
        value = float(a.mean() ** (1.0 / p))
        rng = as_policy(seed, "moment").generator(f"bootstrap/n={self.n}/p={p}")
        boots = np.empty(n_boot)
        for b in range(n_boot):
            idx = rng.integers(0, self.R, self.R)
            boots[b] = a[idx].mean() ** (1.0 / p)
        lo, hi = np.quantile(boots, [(1 - level) / 2, 1 - (1 - level) / 2])
        return MomentEstimate(p, value, float(min(lo, value)), float(max(hi, value)), self.R, level)


def simulate_sum(model, f, n, R, policy, workers=1):
    """Run both batches for horizon ``n`` and return a :class:`SimulatedSum`."""
    if R < 100:
        raise DomainError("need at least 100 replications")
    policy = as_policy(policy)
    tail_stream, mean_stream = f"tail/n={n}", f"mean/n={n}"
    f_tail = _blocked(lambda r: functional_values(model, f, n, policy, r, tail_stream), R, workers)
    f_mean = _blocked(lambda r: functional_values(model, f, n, policy, r, mean_stream), R, workers)
    rec = {"master_seed": policy.master_seed, "experiment_id": policy.experiment_id,
           "streams": [tail_stream, mean_stream]}
    return SimulatedSum(f_tail, f_mean, n, rec)


def estimate_tail(model, f, n, thresholds, R, policy, sides=("plus", "minus"), workers=1, convention="raw"):
    """Tail estimates for every (threshold, side)."""
    sim = simulate_sum(model, f, n, R, policy, workers)
    return [sim.tail(t, side, convention) for t in thresholds for side in sides]


def estimate_moment(model, f, n, p, R, policy, n_boot=200, level=0.99, workers=1):
    sim = simulate_sum(model, f, n, R, policy, workers)
    return sim.moment(p, n_boot, level, policy)


@dataclass
class Comparison:
    dominated: bool
    margin: float


def compare_bound_vs_empirical(bound, est):
    """``dominated`` iff the upper confidence limit is at most the bound."""
    bconv = getattr(bound, "convention", None)
    if bconv is not None and est.convention != bconv:
        raise ConventionError(f"bound uses {bconv!r} thresholds, estimate uses {est.convention!r}")
    margin = float(bound.value) - float(est.ci_high)
    return Comparison(margin >= 0.0, margin)
