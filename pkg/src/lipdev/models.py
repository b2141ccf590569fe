"""Non-homogeneous chains ``X_n = F_n(X_{n-1}, eps_n)``.

Each family implements

* ``draw(k, u)``: turn counter uniforms of shape ``(R, n_slots)`` into the
  realised noise ``eps_k`` (shape ``(R, n_noise)``);
* ``step(k, x, eps)``: the random function ``F_k``;
* ``contraction_certificate()``: the family's mean-contraction constant;
* ``h_exact`` / ``l_exact``: closed forms of the dominating variable
  ``H_k(x, y) = E' d(F_k(x, y), F_k(x, Y'))`` and of ``L_k(x) = E[H_k(x, Y)^2]``
  where they exist (``None`` otherwise);
* ``hk_moment_upper(k, p, ...)``: the family's upper bound on ``E[H_k^p]``.

States are float arrays of shape ``(R,)`` for scalar chains and ``(R, d)``
for vector chains.
"""
from __future__ import annotations

import copy
import math
from functools import cached_property

import numpy as np
from scipy import stats

from .laws import (
    Bernoulli,
    Law,
    PointMass,
    Poisson,
    Product,
    Schedule,
    UnitPoissonProcess,
    law_from_dict,
    poisson_mad,
    poisson_ppf,
    poisson_raw_moment,
    poisson_support_top,
)
from .metrics import ContractionCertificate, DomainError, Metric, alpha_transform, metric_from_dict

FAMILIES = ("arch", "switching_arch", "gar_vector", "inar1", "glm_poisson", "glm_garch_poisson", "generic")


class ModelError(ValueError):
    """A state or parameter is outside the family's domain."""


class NonContractiveError(ModelError):
    pass


class UnsupportedError(NotImplementedError):
    pass


def _law_schedule(obj):
    return Schedule.of(obj, law_from_dict)


def _float_schedule(obj):
    return Schedule.of(obj, float)


def _pair_abs_moment(law, p):
    """``E|Y - Y'|^p`` for independent copies, by enumeration/quadrature."""
    v, w = law.nodes
    diff = np.abs(v[:, None] - v[None, :]) ** p
    return float(w @ diff @ w)


class ChainModel:
    family = "generic"
    state_dim = 1
    n_slots = 1

    def __init__(self, initial=0.0, metric=None):
        self.initial = _initial_law(initial, self.state_dim)
        self.metric = metric_from_dict(metric) if metric is not None else self.default_metric()

    # -- plumbing -----------------------------------------------------------
    def default_metric(self):
        return Metric("absolute")

    def steps(self):
        """Representative step indices covering every distinct schedule entry."""
        ks = {2}
        for s in self._schedules():
            ks.update(s.steps())
        return sorted(ks)

    def _schedules(self):
        return []

    def broadcast_state(self, x, m):
        x = np.asarray(x, dtype=float)
        if self.state_dim == 1:
            return np.broadcast_to(x.reshape(-1)[0] if x.size == 1 else x, (m,)).astype(float)
        return np.broadcast_to(x.reshape(-1, self.state_dim), (m, self.state_dim)).astype(float)

    def sample_initial(self, u):
        """``u`` has shape ``(R, state_dim)``."""
        init = self.initial
        if isinstance(init, np.ndarray):
            shape = (u.shape[0],) if self.state_dim == 1 else (u.shape[0], self.state_dim)
            return np.broadcast_to(init if self.state_dim > 1 else init[0], shape).astype(float)
        if self.state_dim == 1:
            return init.sample(u[:, 0])
        return np.stack([law.sample(u[:, i]) for i, law in enumerate(init)], axis=1)

    @property
    def fixed_start(self):
        return isinstance(self.initial, np.ndarray)

    def g_init(self, x):
        """``G_{X_1}(x) = E d(x, X_1')``."""
        init = self.initial
        if isinstance(init, np.ndarray):
            return np.zeros(np.shape(x)[:1] if self.state_dim > 1 else np.shape(x))
        if self.state_dim == 1:
            if self.metric.kind == "absolute":
                return init.mad(x)
            v, w = init.nodes
            x = np.asarray(x, dtype=float)
            return self.metric(x[..., None], v) @ w
        if self.metric.kind == "norm_p" and self.metric.q == 1.0:
            wts = self.metric.weights or (1.0,) * self.state_dim
            return sum(wt * law.mad(x[:, i]) for i, (law, wt) in enumerate(zip(init, wts)))
        raise UnsupportedError("G_X1 needs a point-mass start or an l1 metric for vector chains")

    # -- model ----------------------------------------------------------------
    def draw(self, k, u):
        raise NotImplementedError

    def step(self, k, x, eps):
        raise NotImplementedError

    def base_rho(self):
        raise NotImplementedError

    def contraction_certificate(self):
        rho = self.base_rho()
        if not rho < 1.0:
            raise NonContractiveError(f"{self.family}: contraction constant {rho:.6g} is not < 1")
        alpha = self.metric.total_alpha
        if alpha != 1.0:
            return alpha_transform(Metric("absolute"), alpha, rho)[1]
        return ContractionCertificate(rho, "model_formula")

    @cached_property
    def certificate(self):
        return self.contraction_certificate()

    def with_alpha(self, alpha):
        """Same chain measured with ``d**alpha`` and certified at ``rho**alpha``."""
        new_metric, _ = alpha_transform(self.metric, alpha, 0.0)
        m = copy.copy(self)
        m.__dict__.pop("certificate", None)
        m.metric = new_metric
        return m

    def h_exact(self, k, x, eps):
        return None

    def l_exact(self, k, x):
        return None

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        raise UnsupportedError(f"no closed-form H_k moment bound for family {self.family!r}")

    def _exact_ok(self):
        return self.metric.is_base() and self.metric.kind != "alpha_power"

    def to_dict(self):
        raise NotImplementedError


def _initial_law(initial, dim):
    if isinstance(initial, (Law,)):
        if dim != 1:
            raise ModelError("a scalar initial law needs a scalar chain")
        return initial
    if isinstance(initial, dict):
        if initial.get("kind") == "point_mass" and isinstance(initial.get("value"), list):
            initial = initial["value"]
        else:
            law = law_from_dict(initial)
            if isinstance(law, PointMass):
                return np.full(dim, law.value)
            return _initial_law(law, dim)
    if isinstance(initial, (list, tuple)) and initial and all(isinstance(i, (Law, dict)) for i in initial):
        laws = [law_from_dict(i) for i in initial]
        if len(laws) != dim:
            raise ModelError("need one initial law per coordinate")
        return laws
    arr = np.atleast_1d(np.asarray(initial, dtype=float))
    if arr.size == 1:
        arr = np.full(dim, arr[0])
    if arr.size != dim:
        raise ModelError(f"initial state has dimension {arr.size}, chain has {dim}")
    return arr


def _initial_to_obj(initial):
    if isinstance(initial, np.ndarray):
        v = initial.tolist()
        return {"kind": "point_mass", "value": v[0] if len(v) == 1 else v}
    if isinstance(initial, list):
        return [law.to_dict() for law in initial]
    return initial.to_dict()


def _moment_from(samples, fn, key, moments):
    if key in moments:
        return float(moments[key])
    if samples is None:
        raise ModelError(f"state moment {key!r} required (pass it or x_samples)")
    return float(np.mean(fn(np.asarray(samples, dtype=float))))


class ARCH(ChainModel):
    """``X_k = sqrt(a_k^2 X_{k-1}^2 + b_k^2) * eps_k``."""

    family = "arch"

    def __init__(self, a, b, noise, initial=0.0, metric=None):
        self.a = _float_schedule(a)
        self.b = _float_schedule(b)
        self.noise = _law_schedule(noise)
        super().__init__(initial, metric)

    def _schedules(self):
        return [self.a, self.b, self.noise]

    def scale(self, k, x):
        a, b = self.a(k), self.b(k)
        return np.sqrt(a * a * np.asarray(x) ** 2 + b * b)

    def draw(self, k, u):
        return self.noise(k).sample(u[..., :1])

    def step(self, k, x, eps):
        return self.scale(k, x) * eps[..., 0]

    def base_rho(self):
        return max(abs(self.a(k)) * self.noise(k).abs_moment(1) for k in self.steps())

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        return self.scale(k, x) * self.noise(k).mad(eps[..., 0])

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        return self.scale(k, x) ** 2 * self.noise(k).mad_moment(2)

    def factor_C(self, k, x):
        """``C(x)`` in the factorisation ``H_k(x, y) = C(x) G_k(y)``."""
        return self.scale(k, x)

    def factor_G(self, k, y):
        return self.noise(k).mad(y)

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        if p < 1:
            raise DomainError("p must be >= 1")
        a, b = self.a(k), self.b(k)
        sm = _moment_from(x_samples, lambda x: (a * a * x * x + b * b) ** (p / 2), "scale_moment", moments)
        const = 2.0 ** (p - 1) if p >= 2 else 2.0**p
        return const * sm * self.noise(k).abs_moment(p)

    def to_dict(self):
        return {
            "family": self.family,
            "a": self.a.to_obj(),
            "b": self.b.to_obj(),
            "noise": self.noise.to_obj(lambda l: l.to_dict()),
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }


class SwitchingARCH(ChainModel):
    """ARCH with a Bernoulli regime switch.

    ``F(x, (y1, y2)) = y2 sqrt(a^2 x^2 + b^2) y1 + (1 - y2) sqrt(a'^2 x^2 + b'^2) y1``
    with ``y1 ~ noise`` and ``y2 ~ Bernoulli(q)``.
    """

    family = "switching_arch"
    n_slots = 2

    def __init__(self, a, b, a2, b2, noise, q, initial=0.0, metric=None):
        self.a = _float_schedule(a)
        self.b = _float_schedule(b)
        self.a2 = _float_schedule(a2)
        self.b2 = _float_schedule(b2)
        self.noise = _law_schedule(noise)
        self.q = _float_schedule(q)
        super().__init__(initial, metric)

    def _schedules(self):
        return [self.a, self.b, self.a2, self.b2, self.noise, self.q]

    def scales(self, k, x):
        x2 = np.asarray(x, dtype=float) ** 2
        s1 = np.sqrt(self.a(k) ** 2 * x2 + self.b(k) ** 2)
        s0 = np.sqrt(self.a2(k) ** 2 * x2 + self.b2(k) ** 2)
        return s1, s0

    def noise_law(self, k):
        return Product(self.noise(k), Bernoulli(self.q(k)))

    def draw(self, k, u):
        return self.noise_law(k).sample(u[..., :2])

    def step(self, k, x, eps):
        s1, s0 = self.scales(k, x)
        y1, y2 = eps[..., 0], eps[..., 1]
        return y2 * s1 * y1 + (1.0 - y2) * s0 * y1

    def base_rho(self):
        # regime y2 = 1 carries (a, b), so it is weighted by q
        return max(
            (self.q(k) * abs(self.a(k)) + (1.0 - self.q(k)) * abs(self.a2(k))) * self.noise(k).abs_moment(1)
            for k in self.steps()
        )

    def _h_from_value(self, k, c, s1, s0):
        law, q = self.noise(k), self.q(k)

        def part(s):
            safe = np.where(s > 0, s, 1.0)
            return np.where(s > 0, safe * law.mad(c / safe), np.abs(c))

        return q * part(s1) + (1.0 - q) * part(s0)

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        s1, s0 = self.scales(k, x)
        c = self.step(k, x, eps)
        return self._h_from_value(k, c, s1, s0)

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        s1, s0 = self.scales(k, x)
        v, w = self.noise(k).nodes
        q = self.q(k)
        s1e, s0e = s1[..., None], s0[..., None]
        h1 = self._h_from_value(k, s1e * v, s1e, s0e)
        h0 = self._h_from_value(k, s0e * v, s1e, s0e)
        return q * (h1**2 @ w) + (1.0 - q) * (h0**2 @ w)

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        a, b, a2, b2, q = self.a(k), self.b(k), self.a2(k), self.b2(k), self.q(k)
        m1 = _moment_from(x_samples, lambda x: (a * a * x * x + b * b) ** (p / 2), "scale_moment", moments)
        m0 = _moment_from(x_samples, lambda x: (a2 * a2 * x * x + b2 * b2) ** (p / 2), "scale_moment_alt", moments)
        e = self.noise(k).abs_moment(p)
        const = 4.0 ** (p - 1) if p >= 2 else 2.0**p
        return const * (m1 * q * e + m0 * (1.0 - q) * e)

    def to_dict(self):
        return {
            "family": self.family,
            "a": self.a.to_obj(),
            "b": self.b.to_obj(),
            "a2": self.a2.to_obj(),
            "b2": self.b2.to_obj(),
            "q": self.q.to_obj(),
            "noise": self.noise.to_obj(lambda l: l.to_dict()),
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }


class GAR(ChainModel):
    """``X_k = A_k X_{k-1} + B_k`` with ``A_k = a_k M``.

    ``a_k`` is a scalar random multiplier, ``M`` a fixed matrix (identity
    by default) and ``B_k`` has independent coordinates.
    """

    family = "gar_vector"

    def __init__(self, A, B, dim=1, matrix=None, initial=0.0, metric=None):
        self.state_dim = int(dim)
        self.A = _law_schedule(A)
        if self.state_dim == 1:
            self.B = [_law_schedule(B)]
        else:
            if isinstance(B, dict) and "coords" in B:
                if len(B["coords"]) != self.state_dim:
                    raise ModelError("need one B law per coordinate")
                self.B = [_law_schedule(b) for b in B["coords"]]
            else:
                self.B = [_law_schedule(B)] * self.state_dim
        self.n_slots = 1 + self.state_dim
        self.matrix = None if matrix is None else np.asarray(matrix, dtype=float).reshape(self.state_dim, self.state_dim)
        super().__init__(initial, metric)

    def default_metric(self):
        return Metric("absolute") if self.state_dim == 1 else Metric("norm_p", q=1.0)

    def _schedules(self):
        return [self.A, *self.B]

    def _apply_matrix(self, x):
        if self.state_dim == 1 or self.matrix is None:
            return x
        return x @ self.matrix.T

    def mat_norm(self):
        if self.matrix is None:
            return 1.0
        return self.metric.root[0].operator_norm(self.matrix)

    def draw(self, k, u):
        cols = [self.A(k).sample(u[..., 0])]
        cols += [b(k).sample(u[..., 1 + i]) for i, b in enumerate(self.B)]
        return np.stack(cols, axis=-1)

    def step(self, k, x, eps):
        a = eps[..., 0]
        if self.state_dim == 1:
            return a * x + eps[..., 1]
        return a[..., None] * self._apply_matrix(x) + eps[..., 1:]

    def base_rho(self):
        return max(self.A(k).abs_moment(1) for k in self.steps()) * self.mat_norm()

    def _b_mad_sum(self, k, b):
        root = self.metric.root[0]
        if self.state_dim == 1:
            return self.B[0](k).mad(b[..., 0])
        if root.kind == "norm_p" and root.q == 1.0:
            w = root.weights or (1.0,) * self.state_dim
            return sum(wi * law(k).mad(b[..., i]) for i, (law, wi) in enumerate(zip(self.B, w)))
        return None

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        A_pm = self.A(k).is_point_mass
        B_pm = all(b(k).is_point_mass for b in self.B)
        if A_pm and B_pm:
            return np.zeros(eps.shape[0])
        if A_pm:
            return self._b_mad_sum(k, eps[..., 1:])
        if B_pm:
            mx = self._apply_matrix(np.asarray(x, dtype=float))
            norm = np.abs(mx) if self.state_dim == 1 else self.metric(mx, np.zeros_like(mx))
            return self.A(k).mad(eps[..., 0]) * norm
        return None

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        n = np.shape(x)[0]
        A_pm = self.A(k).is_point_mass
        B_pm = all(b(k).is_point_mass for b in self.B)
        if A_pm and B_pm:
            return np.zeros(n)
        if A_pm:
            if self.state_dim == 1:
                return np.full(n, self.B[0](k).mad_moment(2))
            root = self.metric.root[0]
            if root.kind == "norm_p" and root.q == 1.0:
                w = np.asarray(root.weights or (1.0,) * self.state_dim)
                m1 = np.array([law(k).mad_moment(1) for law in self.B]) * w
                m2 = np.array([law(k).mad_moment(2) for law in self.B]) * w**2
                return np.full(n, m2.sum() + m1.sum() ** 2 - (m1**2).sum())
            return None
        if B_pm:
            mx = self._apply_matrix(np.asarray(x, dtype=float))
            norm = np.abs(mx) if self.state_dim == 1 else self.metric(mx, np.zeros_like(mx))
            return norm**2 * self.A(k).mad_moment(2)
        return None

    def b_norm_moment(self, k, p):
        """``E|B_k|^p`` in the state norm."""
        if self.state_dim == 1:
            return self.B[0](k).abs_moment(p)
        from .rng import RngPolicy

        u = RngPolicy(0, "gar_b_norm").uniforms("b", np.arange(1 << 16), k, self.n_slots)
        b = self.draw(k, u)[..., 1:]
        return float(np.mean(self.metric.root[0](b, np.zeros_like(b)) ** p))

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        if self.state_dim == 1:
            fn = lambda x: np.abs(x) ** p
        else:
            fn = lambda x: self.metric.root[0](x, np.zeros_like(x)) ** p
        xm = _moment_from(x_samples, fn, "x_moment", moments)
        a_mom = self.A(k).abs_moment(p) * self.mat_norm() ** p
        const = 4.0 ** (p - 1) if p >= 2 else 2.0 ** (2 * p - 1)
        return const * xm * a_mom + const * self.b_norm_moment(k, p)

    def to_dict(self):
        law = lambda l: l.to_dict()
        d = {
            "family": self.family,
            "dim": self.state_dim,
            "A": self.A.to_obj(law),
            "B": self.B[0].to_obj(law) if len(set(map(id, self.B))) == 1 else {"coords": [b.to_obj(law) for b in self.B]},
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }
        if self.matrix is not None:
            d["matrix"] = self.matrix.tolist()
        return d


def _cdf_on_nodes(vals, wts):
    """Exact cdf function for a finite discrete law given by nodes."""
    return lambda j: (np.asarray(j)[..., None] >= vals) @ wts


class INAR1(ChainModel):
    """``X_k = eps0_k + sum_{i <= X_{k-1}} eps_i``, eps_i i.i.d. counts.

    The thinning sum is realised from one uniform by the quantile of its
    exact law (binomial for Bernoulli counts, Poisson for Poisson counts).
    """

    family = "inar1"
    n_slots = 2

    def __init__(self, eps0, eps1, initial=0.0, metric=None):
        self.eps0 = _law_schedule(eps0)
        self.eps1 = _law_schedule(eps1)
        for k in self.eps1.steps():
            if not isinstance(self.eps1(k), (Bernoulli, Poisson)):
                raise ModelError("INAR counting law must be bernoulli or poisson")
        for k in self.eps0.steps():
            if not self.eps0(k).integer_valued:
                raise ModelError("INAR immigration law must be integer valued")
        super().__init__(initial, metric)

    def _schedules(self):
        return [self.eps0, self.eps1]

    def _thin(self, k, x, u):
        law = self.eps1(k)
        if isinstance(law, Bernoulli):
            return np.where(x > 0, stats.binom.ppf(u, np.maximum(x, 0), law.q), 0.0)
        return poisson_ppf(u, law.lam * x)

    def _sum_cdf(self, k, j, x):
        law = self.eps1(k)
        if isinstance(law, Bernoulli):
            return stats.binom.cdf(j, x, law.q)
        return stats.poisson.cdf(j, law.lam * x)

    def draw(self, k, u):
        return np.stack([self.eps0(k).sample(u[..., 0]), u[..., 1]], axis=-1)

    def step(self, k, x, eps):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ModelError("INAR state must be nonnegative")
        return eps[..., 0] + self._thin(k, x, eps[..., 1])

    def base_rho(self):
        return max(self.eps1(k).mean() for k in self.steps())

    def _d_cdf(self, k, j, x):
        v, w = self.eps0(k).nodes
        j = np.asarray(j, dtype=float)
        return sum(wi * self._sum_cdf(k, j - vi, x) for vi, wi in zip(v, w))

    def _mad_d(self, k, d, x):
        """``E|d - D'|`` with ``D' = eps0' + thinning sum at x``."""
        d = np.asarray(d, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), d.shape)
        mean = self.eps0(k).mean() + self.eps1(k).mean() * x
        acc = np.zeros(d.shape)
        top = int(d.max()) if d.size else 0
        for i in range(top):
            acc += np.where(i < d, self._d_cdf(k, i, x), 0.0)
        return mean - d + 2.0 * acc

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        d = self.step(k, x, eps)
        return self._mad_d(k, d, x)

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape)
        for xv in np.unique(x):
            top = 0
            while self._d_cdf(k, top, xv) < 1.0 - 1e-15:
                top += 1
            d = np.arange(top + 1, dtype=float)
            cdf = self._d_cdf(k, d, xv)
            pmf = np.diff(np.concatenate([[0.0], cdf]))
            out[x == xv] = np.sum(pmf * self._mad_d(k, d, np.full(d.shape, xv)) ** 2)
        return out

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        e0 = _pair_abs_moment(self.eps0(k), p)
        e1 = _pair_abs_moment(self.eps1(k), p)
        if p >= 2:
            xm = _moment_from(x_samples, lambda x: x ** (p / 2), "x_moment", moments)
            c = 2.0 ** ((p - 2) / 2)
            return c * e0 + (p - 1) ** (p / 2) * c * xm * e1
        xm = _moment_from(x_samples, lambda x: x, "x_moment", moments)
        return e0 + 2.0 ** (2 - p) * xm * e1

    def to_dict(self):
        law = lambda l: l.to_dict()
        return {
            "family": self.family,
            "eps0": self.eps0.to_obj(law),
            "eps1": self.eps1.to_obj(law),
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }


def _glm_const(p):
    # below p = 2 the sharper constant fails for small intensities;
    # H <= y + t and t^p <= E N^p give 2^p for every p >= 1
    return 2.0 ** (p - 1) if p >= 2 else 2.0**p


def _poisson_l(t):
    """``E[(E'|N - N'|)^2]`` for ``N, N' ~ Poisson(t)``, per value of ``t``."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape)
    for tv in np.unique(t):
        if tv <= 0:
            out[t == tv] = 0.0
            continue
        top = poisson_support_top(tv)
        c = np.arange(top + 1, dtype=float)
        out[t == tv] = np.sum(stats.poisson.pmf(c, tv) * poisson_mad(c, tv) ** 2)
    return out


class GLMPoisson(ChainModel):
    """``X_k = y_k(f_k(X_{k-1}))`` with ``f_k(x) = omega_k + gamma_k x``."""

    family = "glm_poisson"

    def __init__(self, omega, gamma, initial=0.0, metric=None):
        self.omega = _float_schedule(omega)
        self.gamma = _float_schedule(gamma)
        self.process = UnitPoissonProcess()
        super().__init__(initial, metric)

    def _schedules(self):
        return [self.omega, self.gamma]

    def intensity(self, k, x):
        t = self.omega(k) + self.gamma(k) * np.asarray(x, dtype=float)
        if np.any(t < 0):
            raise ModelError("negative intensity f_k(x) < 0")
        return t

    def draw(self, k, u):
        return u[..., :1].astype(float)

    def step(self, k, x, eps):
        return self.process.evaluate(eps[..., 0], self.intensity(k, x))

    def base_rho(self):
        return max(abs(self.gamma(k)) for k in self.steps())

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        t = self.intensity(k, x)
        return poisson_mad(self.process.evaluate(eps[..., 0], t), t)

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        return _poisson_l(self.intensity(k, x))

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        qp = _moment_from(
            x_samples, lambda x: poisson_raw_moment(self.intensity(k, x), p), "qp_mean", moments
        )
        return _glm_const(p) * qp

    def to_dict(self):
        return {
            "family": self.family,
            "omega": self.omega.to_obj(),
            "gamma": self.gamma.to_obj(),
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }


class GLMGarchPoisson(ChainModel):
    """State ``(lambda, z)``; ``lambda_k = omega + beta lambda + gamma z``, ``z_k = y_k(lambda_k)``.

    Distances use ``|lambda - lambda'| + weight |z - z'|``.
    """

    family = "glm_garch_poisson"
    state_dim = 2

    def __init__(self, omega, beta, gamma, weight=1.0, initial=(1.0, 0.0), metric=None):
        self.omega = _float_schedule(omega)
        self.beta = _float_schedule(beta)
        self.gamma = _float_schedule(gamma)
        self.weight = float(weight)
        if self.weight <= 0:
            raise ModelError("GLM-GARCH metric weight must be positive")
        self.process = UnitPoissonProcess()
        super().__init__(initial, metric)

    def default_metric(self):
        return Metric("norm_p", q=1.0, weights=(1.0, self.weight))

    def _schedules(self):
        return [self.omega, self.beta, self.gamma]

    def intensity(self, k, x):
        x = np.asarray(x, dtype=float)
        t = self.omega(k) + self.beta(k) * x[..., 0] + self.gamma(k) * x[..., 1]
        if np.any(t < 0):
            raise ModelError("negative intensity f_k(x) < 0")
        return t

    def draw(self, k, u):
        return u[..., :1].astype(float)

    def step(self, k, x, eps):
        t = self.intensity(k, x)
        return np.stack([t, self.process.evaluate(eps[..., 0], t)], axis=-1)

    def lipschitz(self, k):
        return max(abs(self.beta(k)), abs(self.gamma(k)) / self.weight)

    def base_rho(self):
        return max(self.lipschitz(k) * (1.0 + self.weight) for k in self.steps())

    def h_exact(self, k, x, eps):
        if not self._exact_ok():
            return None
        t = self.intensity(k, x)
        return self.weight * poisson_mad(self.process.evaluate(eps[..., 0], t), t)

    def l_exact(self, k, x):
        if not self._exact_ok():
            return None
        return self.weight**2 * _poisson_l(self.intensity(k, x))

    def hk_moment_upper(self, k, p, x_samples=None, **moments):
        qp = _moment_from(
            x_samples, lambda x: poisson_raw_moment(self.intensity(k, x), p), "qp_mean", moments
        )
        return self.weight**p * _glm_const(p) * qp

    def to_dict(self):
        return {
            "family": self.family,
            "omega": self.omega.to_obj(),
            "beta": self.beta.to_obj(),
            "gamma": self.gamma.to_obj(),
            "weight": self.weight,
            "initial": _initial_to_obj(self.initial),
            "metric": self.metric.to_dict(),
        }


class GenericModel(ChainModel):
    """User-composed random function with a user-supplied contraction constant."""

    family = "generic"

    def __init__(self, step_fn, noise, rho, dim=1, initial=0.0, metric=None):
        self.state_dim = int(dim)
        self.step_fn = step_fn
        self.noise = noise if isinstance(noise, Schedule) else Schedule([noise])
        first = self.noise(2)
        self.n_slots = first.n_slots if isinstance(first, Product) else 1
        self.rho = float(rho)
        super().__init__(initial, metric)

    def draw(self, k, u):
        law = self.noise(k)
        if isinstance(law, Product):
            return law.sample(u[..., : law.n_slots])
        return law.sample(u[..., :1])

    def step(self, k, x, eps):
        return np.asarray(self.step_fn(k, x, eps), dtype=float)

    def base_rho(self):
        return self.rho

    def contraction_certificate(self):
        cert = super().contraction_certificate()
        return ContractionCertificate(cert.rho, "user_supplied")

    def to_dict(self):
        return {"family": self.family, "rho": self.rho, "metric": self.metric.to_dict()}


def model_from_dict(spec):
    """Build a model from its JSON block (see the README for the schema)."""
    spec = dict(spec)
    family = spec.pop("family")
    metric = spec.pop("metric", None)
    initial = spec.pop("initial", None)
    alpha = spec.pop("alpha", None)
    kw = {"metric": metric}
    if initial is not None:
        kw["initial"] = initial
    if family == "arch":
        m = ARCH(spec["a"], spec["b"], spec["noise"], **kw)
    elif family == "switching_arch":
        m = SwitchingARCH(spec["a"], spec["b"], spec["a2"], spec["b2"], spec["noise"], spec["q"], **kw)
    elif family == "gar_vector":
        m = GAR(spec["A"], spec["B"], dim=spec.get("dim", 1), matrix=spec.get("matrix"), **kw)
    elif family == "inar1":
        m = INAR1(spec["eps0"], spec["eps1"], **kw)
    elif family == "glm_poisson":
        m = GLMPoisson(spec["omega"], spec["gamma"], **kw)
    elif family == "glm_garch_poisson":
        m = GLMGarchPoisson(spec["omega"], spec["beta"], spec["gamma"], weight=spec.get("weight", 1.0), **kw)
    elif family == "generic":
        raise ModelError("generic models are built in Python (GenericModel), not from config")
    else:
        raise ModelError(f"unknown family {family!r}")
    if alpha is not None and float(alpha) != 1.0:
        m = m.with_alpha(float(alpha))
    return m
