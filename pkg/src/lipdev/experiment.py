"""Run a configured experiment and write its reports.

Pipeline: certificate -> dominator bank -> constants -> bound grid ->
Monte Carlo tails and moments -> domination comparisons.  Failures of an
individual bound are recorded as annotations instead of aborting the run.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy
from scipy import optimize

from . import __version__
from . import bounds as B
from .dominators import DominatorBank, Estimate, exp_moment_estimate, moment_estimate, weak_norm_estimate
from .metrics import ConfigurationError, DomainError, k_rho
from .mc import clopper_pearson, compare_bound_vs_empirical, simulate_sum
from .models import UnsupportedError
from .rng import RngPolicy

CSV_COLUMNS = [
    "experiment_id", "model_family", "n", "x", "side", "convention", "empirical_tail", "ci_low", "ci_high",
    "bound_name", "bound_value", "i1", "i2", "clipped", "dominated", "margin", "seed",
]
INFLATE = 3.0
AUTO_HIGH, AUTO_LOW = 0.9, 1e-3
NEEDS_L = {"semiexp_cond", "fuk_nagaev", "rosenthal"}


@dataclass
class ReportBundle:
    rows: list
    constants: dict
    manifest: dict
    annotations: list = field(default_factory=list)

    @property
    def domination_failures(self):
        return [r for r in self.rows if r["dominated"] is False and not r["clipped"]]


class _Constants:
    """Collects constants with their provenance for ``constants.json``."""

    def __init__(self):
        self.data = {}

    def put(self, n, bound, name, value, provenance, **extra):
        rec = {"value": value, "provenance": provenance, **extra}
        self.data.setdefault(f"n={n}", {}).setdefault(bound, {})[name] = rec
        return value


def _est(e, z=INFLATE):
    return e.upper(z)


def _resolve(spec, estimator, consts, n, bound, name, bank):
    """Supplied number or ``"estimate"`` (upper ``INFLATE``-SE limit)."""
    if spec is None or spec == "estimate":
        e = estimator()
        if isinstance(e, Estimate) and e.flag == "overflow":
            raise DomainError(f"{name}: exponential moment overflow, condition presumed violated")
        value = _est(e) if isinstance(e, Estimate) else float(e)
        point = e.value if isinstance(e, Estimate) else float(e)
        se = e.se if isinstance(e, Estimate) else None
        return consts.put(n, bound, name, value, "estimated", point=point, se=se, inflation_se=INFLATE,
                          m_outer=bank.m_outer)
    return consts.put(n, bound, name, float(spec), "supplied")


def _sup_steps(bank, n, fn):
    best = None
    for k in bank.steps(n):
        e = fn(bank.h(k))
        if e.flag == "overflow":
            return e
        if best is None or e.upper(INFLATE) > best.upper(INFLATE):
            best = e
    return best


def _auto_grid(fn, points, high=AUTO_HIGH, low=AUTO_LOW):
    """Geometric x-grid between the points where the unclipped bound is ``high`` and ``low``."""
    def solve(target):
        a, b = 1e-3, 1.0
        while fn(a) < target and a > 1e-12:
            a /= 4.0
        while fn(b) > target and b < 1e12:
            b *= 4.0
        g = lambda lx: math.log(max(fn(math.exp(lx)), 1e-300)) - math.log(target)
        return math.exp(optimize.brentq(g, math.log(a), math.log(b), xtol=1e-10))

    x_lo, x_hi = solve(high), solve(low)
    if points == 1:
        return [x_hi]
    return list(np.geomspace(x_lo, x_hi, points))


def _grid(spec, fn, R):
    if isinstance(spec, dict):
        # never aim below what R replications can resolve: with no hits the
        # upper confidence limit is clopper_pearson(0, R)[1]
        low = max(spec.get("low", AUTO_LOW), 2.0 * clopper_pearson(0, R)[1])
        high = max(spec.get("high", AUTO_HIGH), 2.0 * low)
        return _auto_grid(fn, spec["auto"], min(high, 0.99), low)
    return list(spec)


def _threshold(convention, x, n, echo):
    if convention == "x_Vn":
        return x * math.sqrt(echo["V2"])
    if convention == "nx":
        return n * x
    return x


def _prob_bound_factory(b, n, model, bank, consts):
    """Return ``(name, convention, fn(x) -> BoundResult)`` list for one config entry."""
    rho = model.certificate.rho
    name = b["name"]
    G = bank.G

    def i1(a_n, x):
        return B.i1_term(G, a_n, x, n, rho)

    if name == "subgaussian":
        eps = _resolve(b.get("epsilon"), lambda: bank.epsilon(n, b.get("l_max", 20), INFLATE), consts, n,
                       name, "epsilon", bank)
        h2 = {k: moment_estimate(bank.h(k), 2).upper(INFLATE) for k in bank.steps(n)}
        v = B.vn_sigma(h2, n, rho)
        consts.put(n, name, "V2", v[0], "estimated", inflation_se=INFLATE, m_outer=bank.m_outer)
        variants = ["sharp", "simple"] if b.get("variant", "sharp") == "both" else [b.get("variant", "sharp")]
        vn = math.sqrt(v[0])
        return [(f"subgaussian_{var}", "x_Vn",
                 (lambda var: lambda x: B.bound_subgaussian(n, x, rho, eps, v, i1(vn, x) if vn > 0 else 0.0, var))(var))
                for var in variants]
    if name == "semiexp":
        a = b["alpha"]
        c1 = _resolve(b.get("C1"), lambda: _sup_steps(bank, n, lambda h: exp_moment_estimate(h, 2 * a / (1 - a))),
                      consts, n, name, "C1", bank)
        return [("semiexp", "nx", lambda x: B.bound_semiexp(n, x, rho, a, c1, i1(n, x)))]
    if name == "semiexp_cond":
        a = b["alpha"]
        c1 = _resolve(b.get("C1"), lambda: exp_moment_estimate(bank.l_mean(n), a / (1 - a)), consts, n, name,
                      "C1", bank)
        c2 = _resolve(b.get("C2"), lambda: _sup_steps(bank, n, lambda h: exp_moment_estimate(h, a / (1 - a))),
                      consts, n, name, "C2", bank)
        return [("semiexp_cond", "nx", lambda x: B.bound_semiexp_cond(n, x, rho, a, c1, c2, i1(n, x)))]
    if name == "fuk_nagaev":
        p, d = b["p"], b["delta"]
        q = p + d
        c1 = _resolve(b.get("C1"), lambda: weak_norm_estimate(bank.l_mean(n), q, seed=bank.policy), consts, n,
                      name, "C1", bank)
        c2 = _resolve(b.get("C2"), lambda: _sup_steps(bank, n, lambda h: weak_norm_estimate(h, q, seed=bank.policy)),
                      consts, n, name, "C2", bank)
        if b.get("i1", "empirical") == "markov":
            c3 = _resolve(b.get("C3"), lambda: bank.A1(p - 1, weak=True), consts, n, name, "C3", bank)
            first = lambda x: B.i1_markov_bound(c3, p, n, x, rho)
        else:
            first = lambda x: i1(n, x)
        return [("fuk_nagaev", "nx", lambda x: B.bound_fuk_nagaev(n, x, rho, p, d, c1, c2, first(x)))]
    if name == "weak_vbe":
        p = b["p"]
        spec = b.get("A", "estimate")
        A = {}
        for k in bank.steps(n):
            if spec == "estimate":
                A[k] = weak_norm_estimate(bank.h(k), p, seed=bank.policy).upper(INFLATE)
            else:
                A[k] = float(spec)
        consts.put(n, name, "A", {str(k): v for k, v in A.items()},
                   "estimated" if spec == "estimate" else "supplied", inflation_se=INFLATE)
        return [("weak_vbe", "raw", lambda x: B.bound_weak_vbe(n, x, rho, p, A, i1(1.0, x)))]
    raise ConfigurationError(f"{name} is not a probability bound")


def _moment_A(b, n, model, bank, consts, p):
    spec = b.get("A", "estimate")
    A = {1: bank.A1(p).upper(INFLATE)}
    for k in bank.steps(n):
        if spec == "estimate":
            A[k] = moment_estimate(bank.h(k), p).upper(INFLATE)
        elif spec == "formula":
            A[k] = model.hk_moment_upper(k, p, x_samples=bank.states[:, k - 2])
        else:
            A[k] = float(spec)
    prov = {"estimate": "estimated", "formula": "model_formula"}.get(spec, "supplied")
    consts.put(n, b["name"], f"A(p={p:g})", {str(k): v for k, v in A.items()}, prov, inflation_se=INFLATE)
    return A


def _moment_bound(b, n, model, bank, consts):
    """Bound on ``||S_n||_p`` (norm scale)."""
    rho = model.certificate.rho
    p = b["p"]
    name = b["name"]
    if name == "mz":
        return B.moment_bound_mz(n, p, rho, _moment_A(b, n, model, bank, consts, p))
    if name == "vbe":
        return B.moment_bound_vbe(n, p, rho, _moment_A(b, n, model, bank, consts, p)) ** (1 / p)
    if name == "rosenthal":
        A = _moment_A(b, n, model, bank, consts, p)
        a12 = bank.A1(2).upper(INFLATE)
        br = bank.l_bracket(n, rho, p, a12)
        bracket = consts.put(n, name, "L_bracket", br.upper(INFLATE), "estimated", point=br.value, se=br.se,
                             inflation_se=INFLATE)
        cp = consts.put(n, name, "Cp", b.get("Cp", 2.0**p * p**p), "supplied" if "Cp" in b else "default")
        return B.moment_bound_rosenthal(n, p, rho, A, bracket, cp) ** (1 / p)
    if name == "gar_corollary":
        if not model.fixed_start or np.any(model.initial != 0):
            raise UnsupportedError("the GAR corollary assumes a fixed start at zero")
        if model.state_dim != 1:
            raise UnsupportedError("the GAR corollary is implemented for scalar chains")
        mom = {}
        for k in range(2, n + 1):
            xk = moment_estimate(np.abs(bank.states[:, k - 2]), p).upper(INFLATE) ** (1 / p)
            mom[k] = (xk, model.A(k).abs_moment(p) ** (1 / p), model.b_norm_moment(k, p) ** (1 / p))
        value, echo = B.gar_corollary_moment(n, p, rho, mom)
        consts.put(n, name, "C_p_rho", echo["C_p_rho"], "derived", p=p)
        return value
    raise ConfigurationError(f"unknown moment bound {name}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def run_experiment(config, seed=None, replications=None, workers=None, simulate=True):
    """Execute ``config`` (an :class:`ExperimentConfig`) and return a :class:`ReportBundle`."""
    seed = config.master_seed if seed is None else int(seed)
    R = config.replications if replications is None else int(replications)
    workers = config.workers if workers is None else int(workers)
    model, f = config.model, config.functional
    policy = RngPolicy(seed, config.experiment_id)
    rho = model.certificate.rho
    consts = _Constants()
    annotations = []
    rows = []

    n_max = max(config.horizons)
    needs_l = any(b["name"] in NEEDS_L for b in config.bounds)
    bank = None
    if config.bounds:
        bank = DominatorBank(model, n_max, config.m_outer, config.m_inner, policy.child(config.experiment_id + "/bank"),
                             want_l=needs_l)

    for n in config.horizons:
        sim = simulate_sum(model, f, n, R, policy, workers) if simulate else None
        for b in config.bounds:
            try:
                if b["name"] in B.MOMENT_BOUNDS:
                    value = _moment_bound(b, n, model, bank, consts)
                    est = sim.moment(b["p"], seed=policy) if sim is not None else None
                    rows.append(_moment_row(config, model, n, b, value, est, seed))
                    continue
                for bname, conv, fn in _prob_bound_factory(b, n, model, bank, consts):
                    grid = _grid(b.get("x_grid", config.x_grid), lambda x: fn(x).unclipped, R)
                    sides = ["abs"] if conv == "raw" else config.sides
                    for x in grid:
                        res = fn(x)
                        t = _threshold(conv, x, n, res.inputs_echo)
                        for side in sides:
                            est = sim.tail(t, side, conv) if sim is not None else None
                            rows.append(_prob_row(config, model, n, x, side, res, est, seed))
            except (DomainError, ConfigurationError, UnsupportedError, ValueError) as exc:
                annotations.append({"n": n, "bound": b["name"], "message": str(exc)})

    manifest = {
        "tool": "lipdev",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "master_seed": seed,
        "replications": R,
        "certificate": {"rho": rho, "derivation": model.certificate.derivation},
        "bank": bank.seed_record() if bank is not None else None,
        "config": config.raw,
    }
    constants = {"constants": consts.data, "annotations": annotations,
                 "sample_sizes": {"m_outer": config.m_outer, "m_inner": config.m_inner,
                                  "bank_exact": bank.exact if bank is not None else None}}
    return ReportBundle(rows, constants, manifest, annotations)


def _base_row(config, model, n, seed):
    return {"experiment_id": config.experiment_id, "model_family": model.family, "n": n, "seed": seed}


def _prob_row(config, model, n, x, side, res, est, seed):
    row = _base_row(config, model, n, seed)
    row.update(x=float(x), side=side, convention=res.convention, bound_name=res.name, bound_value=res.value,
               i1=res.i1, i2=res.i2, clipped=res.clipped)
    if est is None:
        row.update(empirical_tail=None, ci_low=None, ci_high=None, dominated=None, margin=None)
    else:
        cmp = compare_bound_vs_empirical(res, est)
        row.update(empirical_tail=est.estimate, ci_low=est.ci_low, ci_high=est.ci_high,
                   dominated=cmp.dominated, margin=cmp.margin)
    return row


def _moment_row(config, model, n, b, value, est, seed):
    row = _base_row(config, model, n, seed)
    row.update(x=float(b["p"]), side="abs", convention="lp_norm", bound_name=b["name"], bound_value=value,
               i1=None, i2=None, clipped=False)
    if est is None:
        row.update(empirical_tail=None, ci_low=None, ci_high=None, dominated=None, margin=None)
    else:
        row.update(empirical_tail=est.value, ci_low=est.ci_low, ci_high=est.ci_high,
                   dominated=bool(est.ci_high <= value), margin=value - est.ci_high)
    return row


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _finite(o):
    """JSON has no inf/nan; encode them as strings."""
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return str(float(o))
    return o


def write_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])


def emit_reports(bundle, out_dir):
    """Write ``results.csv``, ``constants.json`` and ``manifest.json`` into ``out_dir``."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(bundle.rows, os.path.join(out_dir, "results.csv"))
        for name, obj in (("constants.json", bundle.constants), ("manifest.json", bundle.manifest)):
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                json.dump(_finite(obj), fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write reports to {out_dir!r}: {exc}") from exc
    return [os.path.join(out_dir, n) for n in ("results.csv", "constants.json", "manifest.json")]
