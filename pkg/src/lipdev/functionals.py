"""Separately Lipschitz functionals of a path ``(x_1, ..., x_n)``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import Metric
from .rng import as_policy

KINDS = ("coordinate_sum", "plain_sum", "max_distance", "custom")


class FunctionalError(ValueError):
    pass


@dataclass(frozen=True)
class Functional:
    """``f(x_1..x_n)`` with Lipschitz constant 1 in each coordinate.

    * ``coordinate_sum``: ``sum_i d(x_i, anchor)``
    * ``plain_sum``: ``sum_i x_i`` (scalar states only)
    * ``max_distance``: ``max_i d(x_i, anchor)``
    * ``custom``: ``fn(paths, metric)`` on paths of shape ``(R, n[, d])``

    The built-in kinds can also be accumulated one step at a time, which
    is how long horizons are simulated without storing paths.
    """

    kind: str = "coordinate_sum"
    anchor: object = 0.0
    fn: object = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FunctionalError(f"unknown functional kind {self.kind!r}")
        if self.kind == "custom" and not callable(self.fn):
            raise FunctionalError("custom functional needs a callable")

    @property
    def streaming(self):
        return self.kind != "custom"

    def _term(self, x, metric):
        if self.kind == "plain_sum":
            return np.asarray(x, dtype=float)
        anchor = np.asarray(self.anchor, dtype=float)
        return metric(x, np.broadcast_to(anchor, np.shape(x)) if anchor.ndim == 0 else anchor)

    def start(self, x1, metric):
        return np.array(self._term(x1, metric), dtype=float)

    def update(self, acc, x, metric):
        t = self._term(x, metric)
        if self.kind == "max_distance":
            return np.maximum(acc, t)
        return acc + t

    def evaluate(self, paths, metric=None, state_dim=1):
        """Values of ``f`` on paths shaped ``(R, n)`` or ``(R, n, d)``.

        A single path (shape ``(n,)`` or ``(n, d)``) returns a float.
        """
        metric = metric or (Metric("absolute") if state_dim == 1 else Metric("norm_p", q=1.0))
        paths = np.asarray(paths, dtype=float)
        single = paths.ndim == (1 if state_dim == 1 else 2)
        if single:
            paths = paths[None, ...]
        if state_dim > 1 and paths.shape[-1] != state_dim:
            raise FunctionalError("path dimension does not match the state dimension")
        if self.kind == "custom":
            out = np.asarray(self.fn(paths, metric), dtype=float)
        else:
            if self.kind == "plain_sum" and state_dim > 1:
                raise FunctionalError("plain_sum needs scalar states")
            out = self.start(paths[:, 0], metric)
            for i in range(1, paths.shape[1]):
                out = self.update(out, paths[:, i], metric)
        return float(out[0]) if single else out

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind in ("coordinate_sum", "max_distance"):
            a = np.asarray(self.anchor)
            d["anchor"] = a.tolist() if a.ndim else float(a)
        return d


def functional_from_dict(spec):
    if isinstance(spec, Functional):
        return spec
    spec = spec or {}
    kind = spec.get("kind", "coordinate_sum")
    if kind == "custom":
        raise FunctionalError("custom functionals are built in Python, not from config")
    return Functional(kind, spec.get("anchor", 0.0))


def eval_functional(f, path, metric=None, state_dim=1):
    return f.evaluate(path, metric, state_dim)


def check_separately_lipschitz(f, metric, paths, n_checks=200, scale=1.0, seed=0, state_dim=1):
    """Audit ``|f(.., x_i, ..) - f(.., x_i', ..)| <= d(x_i, x_i')`` on random perturbations.

    Returns the number of violations (relative slack ``1e-9``).
    """
    paths = np.asarray(paths, dtype=float)
    rng = as_policy(seed, "lipschitz_audit").generator("perturb")
    R, n = paths.shape[:2]
    bad = 0
    for _ in range(n_checks):
        r, i = rng.integers(R), rng.integers(n)
        p0 = paths[r].copy()
        p1 = p0.copy()
        p1[i] = p1[i] + scale * rng.standard_normal(np.shape(p1[i]))
        lhs = abs(f.evaluate(p0, metric, state_dim) - f.evaluate(p1, metric, state_dim))
        rhs = float(metric(p0[i][None], p1[i][None])[0])
        if lhs > rhs * (1 + 1e-9) + 1e-12:
            bad += 1
    return bad
