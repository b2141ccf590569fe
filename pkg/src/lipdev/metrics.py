"""State-space metrics, the geometric constants K_k(rho) and contraction checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import as_policy


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class ConfigurationError(ValueError):
    """A model or experiment is missing something an operation needs."""


def k_rho(k, rho):
    """Truncated geometric sum ``1 + rho + ... + rho^k``.

    >>> k_rho(2, 0.5)
    1.75
    """
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    if k < 0:
        raise DomainError("k must be nonnegative")
    if rho == 0:
        return rho * 0 + 1.0 if isinstance(rho, float) else rho * 0 + 1
    # integer literals keep exact types (Fraction) exact
    return (1 - rho ** (k + 1)) / (1 - rho)


def k_rho_array(ks, rho):
    """Vectorised :func:`k_rho` over integer ``ks``."""
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    ks = np.asarray(ks)
    if rho == 0.0:
        return np.ones(ks.shape)
    return (1.0 - rho ** (ks + 1.0)) / (1.0 - rho)


@dataclass(frozen=True)
class ContractionCertificate:
    rho: float
    derivation: str = "user_supplied"

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0) or math.isnan(self.rho):
            raise DomainError(f"contraction constant must lie in [0, 1), got {self.rho}")
        if self.derivation not in ("user_supplied", "model_formula"):
            raise ValueError(f"unknown derivation {self.derivation!r}")


@dataclass(frozen=True)
class Metric:
    """Distance on the state space.

    ``kind`` is ``"absolute"`` (scalar states), ``"norm_p"`` (vector states,
    weighted l_q norm of the difference) or ``"alpha_power"`` (``base**alpha``).
    A callable can be supplied as ``custom`` for metrics outside these three;
    such metrics are evaluated but never validated.
    """

    kind: str = "absolute"
    q: float = 1.0
    weights: tuple | None = None
    base: "Metric | None" = None
    alpha: float = 1.0
    custom: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("absolute", "norm_p", "alpha_power", "custom"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "norm_p" and self.q < 1:
            raise DomainError("norm_p needs q >= 1")
        if self.kind == "alpha_power":
            if self.base is None:
                raise ValueError("alpha_power needs a base metric")
            if not 0.0 < self.alpha <= 1.0:
                raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.kind == "custom" and not callable(self.custom):
            raise ValueError("custom metric needs a callable")

    def __call__(self, x, y):
        if self.kind == "absolute":
            return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.kind == "norm_p":
            diff = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
            if self.weights is not None:
                diff = diff * np.asarray(self.weights, dtype=float)
            if math.isinf(self.q):
                return diff.max(axis=-1)
            if self.q == 1.0:
                return diff.sum(axis=-1)
            return (diff**self.q).sum(axis=-1) ** (1.0 / self.q)
        if self.kind == "alpha_power":
            return self.base(x, y) ** self.alpha
        return np.asarray(self.custom(x, y), dtype=float)

    @property
    def root(self):
        """Underlying non-power metric and the accumulated exponent."""
        if self.kind == "alpha_power":
            inner, a = self.base.root
            return inner, a * self.alpha
        return self, 1.0

    @property
    def total_alpha(self):
        return self.root[1]

    def is_base(self):
        return self.kind != "alpha_power" or self.total_alpha == 1.0

    def operator_norm(self, matrix):
        """Induced norm ``sup_{|x|=1} |M x|`` for unweighted l_1, l_2, l_inf."""
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if self.kind == "absolute":
            return float(abs(m[0, 0]))
        if self.kind != "norm_p" or self.weights is not None:
            raise ConfigurationError("operator norm only available for unweighted norm_p metrics")
        if self.q == 1.0:
            return float(np.abs(m).sum(axis=0).max())
        if self.q == 2.0:
            return float(np.linalg.norm(m, 2))
        if math.isinf(self.q):
            return float(np.abs(m).sum(axis=1).max())
        raise ConfigurationError("operator norm available for q in {1, 2, inf} only")

    def to_dict(self):
        if self.kind == "absolute":
            return {"kind": "absolute"}
        if self.kind == "norm_p":
            d = {"kind": "norm_p", "q": "inf" if math.isinf(self.q) else self.q}
            if self.weights is not None:
                d["weights"] = list(self.weights)
            return d
        if self.kind == "alpha_power":
            return {"kind": "alpha_power", "alpha": self.alpha, "base": self.base.to_dict()}
        return {"kind": "custom"}


def metric_from_dict(spec):
    if isinstance(spec, Metric):
        return spec
    kind = spec.get("kind", "absolute")
    if kind == "absolute":
        return Metric("absolute")
    if kind == "norm_p":
        q = spec.get("q", 1.0)
        q = math.inf if q in ("inf", math.inf) else float(q)
        w = spec.get("weights")
        return Metric("norm_p", q=q, weights=tuple(w) if w is not None else None)
    if kind == "alpha_power":
        return Metric("alpha_power", base=metric_from_dict(spec["base"]), alpha=float(spec["alpha"]))
    raise ValueError(f"unknown metric kind {kind!r}")


def alpha_transform(d, alpha, rho):
    """Return ``(d**alpha, certificate rho**alpha)``.

    Powers compose, so transforming ``d**a`` by ``b`` gives ``d**(a*b)``.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if not 0.0 <= rho < 1.0:
        raise DomainError(f"rho must lie in [0, 1), got {rho}")
    root, a0 = d.root
    total = a0 * alpha
    new = root if total == 1.0 else Metric("alpha_power", base=root, alpha=total)
    return new, ContractionCertificate(rho**alpha, "model_formula")


@dataclass
class ContractionReport:
    x: object
    x_prime: object
    mean: float
    se: float
    bound: float
    passed: bool


def verify_contraction(model, k, pairs, m=4096, seed=0, slack=3.0):
    """Monte Carlo check of the mean contraction at step ``k``.

    For each pair the same ``m`` noise draws are pushed through both
    starting points; the pair passes when the sample mean of the distance
    is at most ``rho * d(x, x') + slack * SE``.
    """
    cert = getattr(model, "certificate", None)
    if cert is None:
        raise ConfigurationError("model carries no contraction certificate")
    if m < 2:
        raise DomainError("need m >= 2 inner samples")
    if len(pairs) == 0:
        raise DomainError("pairs must be nonempty")
    policy = as_policy(seed, "verify_contraction")
    out = []
    for i, (x, xp) in enumerate(pairs):
        u = policy.uniforms("contraction", np.arange(m), k, model.n_slots, sub=i)
        eps = model.draw(k, u)
        xa = model.broadcast_state(x, m)
        xb = model.broadcast_state(xp, m)
        dist = model.metric(model.step(k, xa, eps), model.step(k, xb, eps))
        mean = float(dist.mean())
        se = float(dist.std(ddof=1) / math.sqrt(m))
        d0 = float(model.metric(model.broadcast_state(x, 1), model.broadcast_state(xp, 1))[0])
        bound = cert.rho * d0
        # tiny absolute allowance so exact equality survives float roundoff
        tol = slack * se + 1e-12 * max(1.0, bound)
        out.append(ContractionReport(x, xp, mean, se, bound, mean <= bound + tol))
    return out
