"""Scalar noise laws and per-step parameter schedules.

Every law samples by inverse transform from one uniform, so a step that
needs ``m`` noise components consumes exactly ``m`` counter slots.  Besides
sampling, a law knows the quantities the dominating-variable machinery asks
for: ``E|Y|^p``, the mean absolute deviation ``c -> E|c - Y|`` and a
quadrature representation used for conditional expectations.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy import special, stats

_GL_NODES = 256


def stirling2_row(p):
    """Stirling numbers of the second kind ``S(p, 0..p)`` by the usual recurrence."""
    row = [1]
    for n in range(1, p + 1):
        new = [0] * (n + 1)
        for j in range(1, n + 1):
            new[j] = j * (row[j] if j < len(row) else 0) + row[j - 1]
        row = new
    return row


def poisson_support_top(t):
    """Cut-off beyond which the Poisson(t) mass is negligible (< 1e-17)."""
    return int(t + 12.0 * math.sqrt(t) + 40.0)


def poisson_raw_moment(t, p):
    """``E[N^p]`` for ``N ~ Poisson(t)``.

    Integer orders use the Touchard polynomial ``sum_j S(p, j) t^j``;
    other orders sum the probability series until the remaining tail mass
    is negligible.
    """
    t = np.asarray(t, dtype=float)
    if float(p).is_integer():
        p = int(p)
        coeffs = stirling2_row(p)
        return sum(c * t**j for j, c in enumerate(coeffs) if c)
    flat = np.atleast_1d(t).ravel()
    out = np.empty_like(flat)
    for i, ti in enumerate(flat):
        if ti <= 0:
            out[i] = 0.0
            continue
        top = poisson_support_top(ti)
        j = np.arange(1, top + 1)
        out[i] = np.sum(stats.poisson.pmf(j, ti) * j.astype(float) ** p)
    return out.reshape(t.shape) if t.shape else float(out[0])


class Law:
    """Base class for scalar laws."""

    kind = "law"
    discrete = False
    integer_valued = False

    def ppf(self, u):
        raise NotImplementedError

    def sample(self, u):
        return self.ppf(u)

    def mean(self):
        raise NotImplementedError

    def abs_moment(self, p):
        raise NotImplementedError

    def mad(self, c):
        """``E|c - Y|`` evaluated elementwise."""
        raise NotImplementedError

    @property
    def is_point_mass(self):
        return False

    @cached_property
    def nodes(self):
        """(values, weights) with ``sum w g(v) ~= E g(Y)``."""
        x, w = np.polynomial.legendre.leggauss(_GL_NODES)
        u = 0.5 * (x + 1.0)
        return self.ppf(u), 0.5 * w

    def expect(self, fn):
        v, w = self.nodes
        return float(np.sum(w * fn(v)))

    def mad_moment(self, q):
        """``E[(E'|Y - Y'|)^q]`` where ``Y'`` is an independent copy."""
        return self.expect(lambda v: self.mad(v) ** q)

    def to_dict(self):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({args})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self))


class Categorical(Law):
    """Finite discrete law."""

    kind = "categorical"
    discrete = True

    def __init__(self, values, probs=None):
        values = np.asarray(values, dtype=float)
        if probs is None:
            probs = np.full(values.shape, 1.0 / values.size)
        probs = np.asarray(probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and probs must be matching 1-d arrays")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("probs must be nonnegative and sum to one")
        order = np.argsort(values, kind="stable")
        self.values = values[order]
        self.probs = probs[order]
        self._cdf = np.cumsum(self.probs)
        self._cdf[-1] = 1.0
        self.integer_valued = bool(np.all(self.values == np.round(self.values)))

    def ppf(self, u):
        idx = np.searchsorted(self._cdf, np.asarray(u), side="left")
        return self.values[np.minimum(idx, self.values.size - 1)]

    def mean(self):
        return float(np.dot(self.values, self.probs))

    def abs_moment(self, p):
        return float(np.dot(np.abs(self.values) ** p, self.probs))

    def mad(self, c):
        c = np.asarray(c, dtype=float)
        return np.abs(c[..., None] - self.values) @ self.probs

    @property
    def is_point_mass(self):
        return np.count_nonzero(self.probs) == 1

    @cached_property
    def nodes(self):
        keep = self.probs > 0
        return self.values[keep], self.probs[keep]

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist(), "probs": self.probs.tolist()}


class Rademacher(Categorical):
    kind = "rademacher"

    def __init__(self):
        super().__init__([-1.0, 1.0], [0.5, 0.5])

    def ppf(self, u):
        return np.where(np.asarray(u) < 0.5, -1.0, 1.0)

    def to_dict(self):
        return {"kind": self.kind}


class Bernoulli(Categorical):
    kind = "bernoulli"

    def __init__(self, q):
        if not 0.0 <= q <= 1.0:
            raise ValueError("bernoulli q must lie in [0, 1]")
        self.q = float(q)
        super().__init__([0.0, 1.0], [1.0 - self.q, self.q])

    def ppf(self, u):
        return (np.asarray(u) < self.q).astype(float)

    def to_dict(self):
        return {"kind": self.kind, "q": self.q}


class PointMass(Categorical):
    kind = "point_mass"

    def __init__(self, value):
        self.value = float(value)
        super().__init__([self.value], [1.0])

    def ppf(self, u):
        return np.full(np.shape(u), self.value)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


class Gaussian(Law):
    kind = "gaussian"

    def __init__(self, mu=0.0, sigma=1.0):
        if sigma <= 0:
            raise ValueError("gaussian sigma must be positive")
        self.mu, self.sigma = float(mu), float(sigma)

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(u)

    def mean(self):
        return self.mu

    def abs_moment(self, p):
        if self.mu == 0.0:
            return self.sigma**p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
        from scipy import integrate

        f = lambda y: abs(y) ** p * stats.norm.pdf(y, self.mu, self.sigma)
        lo, hi = self.mu - 40 * self.sigma, self.mu + 40 * self.sigma
        return integrate.quad(f, lo, hi, points=[0.0] if lo < 0 < hi else None, limit=200)[0]

    def mad(self, c):
        z = (np.asarray(c, dtype=float) - self.mu) / self.sigma
        return self.sigma * (2.0 * stats.norm.pdf(z) + z * (2.0 * special.ndtr(z) - 1.0))

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "sigma": self.sigma}


class Uniform(Law):
    kind = "uniform"

    def __init__(self, a, b):
        if not b > a:
            raise ValueError("uniform needs a < b")
        self.a, self.b = float(a), float(b)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u)

    def mean(self):
        return 0.5 * (self.a + self.b)

    def abs_moment(self, p):
        a, b = self.a, self.b
        if a >= 0:
            num = b ** (p + 1) - a ** (p + 1)
        elif b <= 0:
            num = abs(a) ** (p + 1) - abs(b) ** (p + 1)
        else:
            num = abs(a) ** (p + 1) + b ** (p + 1)
        return num / ((p + 1) * (b - a))

    def mad(self, c):
        c = np.asarray(c, dtype=float)
        a, b = self.a, self.b
        inside = ((c - a) ** 2 + (b - c) ** 2) / (2.0 * (b - a))
        return np.where(c <= a, self.mean() - c, np.where(c >= b, c - self.mean(), inside))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


class Poisson(Law):
    kind = "poisson"
    discrete = True
    integer_valued = True

    def __init__(self, lam):
        if lam < 0:
            raise ValueError("poisson mean must be nonnegative")
        self.lam = float(lam)

    def ppf(self, u):
        return poisson_ppf(u, self.lam)

    def mean(self):
        return self.lam

    def abs_moment(self, p):
        return float(poisson_raw_moment(self.lam, p))

    def mad(self, c):
        return poisson_mad(c, self.lam)

    @property
    def is_point_mass(self):
        return self.lam == 0.0

    @cached_property
    def nodes(self):
        top = poisson_support_top(self.lam) if self.lam > 0 else 0
        v = np.arange(top + 1, dtype=float)
        w = stats.poisson.pmf(v, self.lam)
        return v, w / w.sum()

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam}


class SymmetricPareto(Law):
    """``scale * S * P`` with ``S`` a random sign and ``P`` classical Pareto on ``[1, inf)``.

    ``P(|Y| > t) = (t / scale)^(-index)`` for ``t >= scale``, so the weak
    moment of order ``index`` is finite while the strong one is not.
    """

    kind = "symmetric_pareto"

    def __init__(self, index, scale=1.0):
        if index <= 1:
            raise ValueError("pareto index must exceed 1 (finite mean)")
        if scale <= 0:
            raise ValueError("pareto scale must be positive")
        self.index, self.scale = float(index), float(scale)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        v = np.abs(2.0 * u - 1.0)
        mag = (1.0 - v) ** (-1.0 / self.index)
        return self.scale * np.where(u < 0.5, -mag, mag)

    def mean(self):
        return 0.0

    def abs_moment(self, p):
        if p >= self.index:
            return math.inf
        return self.scale**p * self.index / (self.index - p)

    def weak_moment(self, p):
        """``sup_t t^p P(|Y| > t)``; finite iff ``p <= index``."""
        if p > self.index:
            return math.inf
        return self.scale**p

    def _unit_mad(self, u):
        beta = self.index
        ep = beta / (beta - 1.0)
        w = np.maximum(u, 1.0)
        above = ep - w + 2.0 * ((w - 1.0) - (1.0 - w ** (1.0 - beta)) / (beta - 1.0))
        e_abs = np.where(u <= 1.0, ep - u, above)
        return 0.5 * (u + ep) + 0.5 * e_abs

    def mad(self, c):
        u = np.abs(np.asarray(c, dtype=float)) / self.scale
        return self.scale * self._unit_mad(u)

    def to_dict(self):
        return {"kind": self.kind, "index": self.index, "scale": self.scale}


class UnitPoissonProcess(Law):
    """Marginal realisation of a unit-rate Poisson process.

    A draw is the quantile seed ``u``; evaluating the path at intensity
    ``t`` returns the Poisson(t) quantile of ``u``.  Only single-time
    marginals are ever observed, and the quantile coupling keeps
    ``t -> y(t)`` nondecreasing like a genuine counting path.
    """

    kind = "poisson_process_unit"
    integer_valued = True

    def ppf(self, u):
        return np.asarray(u, dtype=float)

    @staticmethod
    def evaluate(draw, t):
        return poisson_ppf(draw, t)

    def to_dict(self):
        return {"kind": self.kind}


class Product:
    """Independent tuple of scalar laws, one counter slot each."""

    kind = "product"

    def __init__(self, *laws):
        if not laws:
            raise ValueError("product needs at least one law")
        self.laws = tuple(laws)

    @property
    def n_slots(self):
        return len(self.laws)

    def sample(self, u):
        u = np.asarray(u)
        return np.stack([law.sample(u[..., i]) for i, law in enumerate(self.laws)], axis=-1)

    def to_dict(self):
        return {"kind": self.kind, "laws": [law.to_dict() for law in self.laws]}

    def __eq__(self, other):
        return isinstance(other, Product) and self.laws == other.laws

    def __hash__(self):
        return hash(self.laws)


def poisson_ppf(u, t):
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    out = stats.poisson.ppf(u, np.maximum(t, 1e-300))
    return np.where(t > 0, out, 0.0)


def poisson_mad(c, t):
    """``E|c - N|`` for ``N ~ Poisson(t)``, elementwise in ``c`` and ``t``."""
    c = np.asarray(c, dtype=float)
    t = np.asarray(t, dtype=float)
    m = np.ceil(c) - 1.0
    pos = c * stats.poisson.cdf(m, t) - t * stats.poisson.cdf(m - 1.0, t)
    pos = np.where(c > 0, pos, 0.0)
    return t - c + 2.0 * pos


_LAWS = {
    "rademacher": lambda d: Rademacher(),
    "gaussian": lambda d: Gaussian(d.get("mu", 0.0), d.get("sigma", 1.0)),
    "uniform": lambda d: Uniform(d["a"], d["b"]),
    "bernoulli": lambda d: Bernoulli(d["q"]),
    "poisson": lambda d: Poisson(d["lam"]),
    "point_mass": lambda d: PointMass(d["value"]),
    "categorical": lambda d: Categorical(d["values"], d.get("probs")),
    "symmetric_pareto": lambda d: SymmetricPareto(d["index"], d.get("scale", 1.0)),
    "poisson_process_unit": lambda d: UnitPoissonProcess(),
}

LAW_KINDS = tuple(_LAWS) + ("product",)


def law_from_dict(spec):
    if isinstance(spec, (Law, Product)):
        return spec
    if isinstance(spec, (int, float)):
        return PointMass(spec)
    kind = spec["kind"]
    if kind == "product":
        return Product(*(law_from_dict(s) for s in spec["laws"]))
    try:
        return _LAWS[kind](spec)
    except KeyError:
        raise ValueError(f"unknown law kind {kind!r}") from None


class Schedule:
    """Step-indexed parameter table with constant extension past its end.

    ``Schedule([v2, v3, v4])`` assigns ``v2`` to step 2, ``v3`` to step 3
    and ``v4`` to every step from 4 on.
    """

    def __init__(self, values, start=2):
        if not isinstance(values, (list, tuple)):
            values = [values]
        if not values:
            raise ValueError("empty schedule")
        self.values = list(values)
        self.start = int(start)

    @classmethod
    def of(cls, obj, convert=None):
        if isinstance(obj, Schedule):
            return obj
        if isinstance(obj, dict) and "schedule" in obj:
            vals = obj["schedule"]
            start = obj.get("start", 2)
        else:
            vals, start = obj, 2
        if not isinstance(vals, (list, tuple)):
            vals = [vals]
        if convert is not None:
            vals = [convert(v) for v in vals]
        return cls(vals, start)

    def __call__(self, k):
        i = int(k) - self.start
        if i < 0:
            i = 0
        return self.values[min(i, len(self.values) - 1)]

    def steps(self):
        """One representative step per distinct table entry (the last covers the tail)."""
        return list(range(self.start, self.start + len(self.values)))

    def to_obj(self, convert=None):
        vals = [convert(v) if convert else v for v in self.values]
        if len(vals) == 1 and self.start == 2:
            return vals[0]
        return {"schedule": vals, "start": self.start}
