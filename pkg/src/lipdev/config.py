"""Experiment configuration: strict JSON schema plus semantic checks."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema

from .functionals import functional_from_dict
from .laws import LAW_KINDS
from .metrics import DomainError
from .models import FAMILIES, ModelError, NonContractiveError, model_from_dict


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_LAW = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(LAW_KINDS)},
        "mu": _NUM, "sigma": _POS, "a": _NUM, "b": _NUM, "q": _NUM, "lam": _NUM,
        "value": {"type": ["number", "array"]}, "values": {"type": "array"}, "probs": {"type": "array"},
        "index": _POS, "scale": _POS, "laws": {"type": "array"},
    },
    "additionalProperties": False,
}
_LAW_OR_NUM = {"anyOf": [_LAW, _NUM]}


def _scheduled(item):
    return {
        "anyOf": [
            item,
            {"type": "array", "items": item, "minItems": 1},
            {
                "type": "object",
                "required": ["schedule"],
                "properties": {"schedule": {"type": "array", "items": item, "minItems": 1},
                               "start": {"type": "integer", "minimum": 2}},
                "additionalProperties": False,
            },
        ]
    }


_METRIC = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["absolute", "norm_p", "alpha_power"]},
        "q": {"anyOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]},
        "weights": {"type": "array", "items": _POS},
        "alpha": _POS,
        "base": {"type": "object"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}
_COMMON_MODEL = {
    "family": {"enum": list(FAMILIES)},
    "initial": {"anyOf": [_NUM, _LAW, {"type": "array"}]},
    "metric": _METRIC,
    "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
}
_FAMILY_PROPS = {
    "arch": {"a": _scheduled(_NUM), "b": _scheduled(_NUM), "noise": _scheduled(_LAW)},
    "switching_arch": {"a": _scheduled(_NUM), "b": _scheduled(_NUM), "a2": _scheduled(_NUM),
                       "b2": _scheduled(_NUM), "q": _scheduled(_NUM), "noise": _scheduled(_LAW)},
    "gar_vector": {"A": _scheduled(_LAW_OR_NUM),
                   "B": {"anyOf": [_scheduled(_LAW_OR_NUM),
                                   {"type": "object", "required": ["coords"],
                                    "properties": {"coords": {"type": "array"}}, "additionalProperties": False}]},
                   "dim": {"type": "integer", "minimum": 1},
                   "matrix": {"type": "array", "items": {"type": "array", "items": _NUM}}},
    "inar1": {"eps0": _scheduled(_LAW), "eps1": _scheduled(_LAW)},
    "glm_poisson": {"omega": _scheduled(_NUM), "gamma": _scheduled(_NUM)},
    "glm_garch_poisson": {"omega": _scheduled(_NUM), "beta": _scheduled(_NUM), "gamma": _scheduled(_NUM),
                          "weight": _POS},
}
_FAMILY_REQUIRED = {
    "arch": ["a", "b", "noise"],
    "switching_arch": ["a", "b", "a2", "b2", "q", "noise"],
    "gar_vector": ["A", "B"],
    "inar1": ["eps0", "eps1"],
    "glm_poisson": ["omega", "gamma"],
    "glm_garch_poisson": ["omega", "beta", "gamma"],
}


def _model_schema():
    branches = []
    for fam, props in _FAMILY_PROPS.items():
        branches.append({
            "if": {"properties": {"family": {"const": fam}}, "required": ["family"]},
            "then": {"required": _FAMILY_REQUIRED[fam], "properties": {**_COMMON_MODEL, **props},
                     "additionalProperties": False},
        })
    return {"type": "object", "required": ["family"], "properties": {"family": {"enum": list(FAMILIES)}},
            "allOf": branches}


_CONST = {"anyOf": [{"type": "number", "minimum": 0}, {"const": "estimate"}]}
_GRID = {"anyOf": [{"type": "array", "items": _POS, "minItems": 0},
                   {"type": "object", "properties": {"auto": {"type": "integer", "minimum": 1},
                                                     "high": _POS, "low": _POS},
                    "required": ["auto"], "additionalProperties": False}]}

_BOUND_PROPS = {
    "subgaussian": {"variant": {"enum": ["sharp", "simple", "both"]}, "epsilon": _CONST,
                    "l_max": {"type": "integer", "minimum": 2}},
    "semiexp": {"alpha": _POS, "C1": _CONST},
    "semiexp_cond": {"alpha": _POS, "C1": _CONST, "C2": _CONST},
    "fuk_nagaev": {"p": _NUM, "delta": _POS, "C1": _CONST, "C2": _CONST,
                   "i1": {"enum": ["empirical", "markov"]}, "C3": _CONST},
    "weak_vbe": {"p": _NUM, "A": _CONST},
    "mz": {"p": _NUM, "A": {"anyOf": [_CONST, {"const": "formula"}]}},
    "vbe": {"p": _NUM, "A": {"anyOf": [_CONST, {"const": "formula"}]}},
    "rosenthal": {"p": _NUM, "Cp": _POS, "A": {"anyOf": [_CONST, {"const": "formula"}]}},
    "gar_corollary": {"p": _NUM},
}
_BOUND_REQUIRED = {"semiexp": ["alpha"], "semiexp_cond": ["alpha"], "fuk_nagaev": ["p", "delta"],
                   "weak_vbe": ["p"], "mz": ["p"], "vbe": ["p"], "rosenthal": ["p"], "gar_corollary": ["p"]}


def _bound_schema():
    branches = []
    for name, props in _BOUND_PROPS.items():
        branches.append({
            "if": {"properties": {"name": {"const": name}}, "required": ["name"]},
            "then": {"required": _BOUND_REQUIRED.get(name, []),
                     "properties": {"name": {"const": name}, "x_grid": _GRID, **props},
                     "additionalProperties": False},
        })
    return {"type": "object", "required": ["name"], "properties": {"name": {"enum": list(_BOUND_PROPS)}},
            "allOf": branches}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["experiment_id", "model", "horizons"],
    "properties": {
        "experiment_id": {"type": "string", "minLength": 1},
        "model": _model_schema(),
        "functional": {"type": "object", "properties": {
            "kind": {"enum": ["coordinate_sum", "plain_sum", "max_distance"]},
            "anchor": {"type": ["number", "array"]}}, "additionalProperties": False},
        "horizons": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
        "x_grid": _GRID,
        "sides": {"type": "array", "items": {"enum": ["plus", "minus"]}, "minItems": 1},
        "bounds": {"type": "array", "items": _bound_schema()},
        "replications": {"type": "integer", "minimum": 100},
        "m_inner": {"type": "integer", "minimum": 1},
        "m_outer": {"type": "integer", "minimum": 2},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "workers": {"type": "integer", "minimum": 1},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}}, "additionalProperties": False},
        "martingale": {"type": "object", "properties": {
            "n": {"type": "integer", "minimum": 2, "maximum": 12},
            "replications": {"type": "integer", "minimum": 1},
            "m_future": {"type": "integer", "minimum": 1}}, "additionalProperties": False},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "functional": {"kind": "coordinate_sum", "anchor": 0.0},
    "x_grid": {"auto": 6},
    "sides": ["plus", "minus"],
    "bounds": [],
    "replications": 10000,
    "m_inner": 256,
    "m_outer": 4096,
    "master_seed": 0,
    "workers": 1,
    "output": {"dir": "results"},
    "martingale": {"n": 4, "replications": 200, "m_future": 1000},
}


@dataclass
class ExperimentConfig:
    raw: dict
    model: object
    functional: object
    horizons: list
    bounds: list
    x_grid: object
    sides: list
    replications: int
    m_inner: int
    m_outer: int
    master_seed: int
    workers: int
    output_dir: str
    martingale: dict
    experiment_id: str = "experiment"
    notes: list = field(default_factory=list)

    def normalized(self):
        """Config echo with defaults filled in (what the manifest records)."""
        return self.raw


def _path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def _semantic_errors(cfg, model, functional):
    errs = []
    for i, b in enumerate(cfg.get("bounds", [])):
        name, p = b["name"], b.get("p")
        where = f"bounds/{i} ({name})"
        if name == "weak_vbe" and not 1 < p < 2:
            errs.append(f"{where}: p must lie strictly between 1 and 2")
        if name == "fuk_nagaev" and p < 2:
            errs.append(f"{where}: p must be >= 2")
        if name in ("mz", "rosenthal") and p < 2:
            errs.append(f"{where}: p must be >= 2")
        if name == "vbe" and not 1 < p <= 2:
            errs.append(f"{where}: p must lie in (1, 2]")
        if name == "gar_corollary" and p <= 1:
            errs.append(f"{where}: p must exceed 1")
        if name in ("semiexp", "semiexp_cond") and not 0 < b["alpha"] < 1:
            errs.append(f"{where}: alpha must lie in (0, 1)")
        if name == "gar_corollary" and model is not None and model.family != "gar_vector":
            errs.append(f"{where}: only available for gar_vector models")
        if name == "fuk_nagaev" and b.get("i1") == "markov" and "C3" not in b:
            errs.append(f"{where}: i1 = markov needs C3")
    if functional is not None and model is not None:
        if functional.kind == "plain_sum" and model.state_dim > 1:
            errs.append("functional: plain_sum needs a scalar state")
    return errs


def parse_config(text):
    """Parse and validate a JSON config; raise :class:`ConfigError` listing all problems."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from None
    return validate_config(cfg)


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message))
    msgs = [f"{_path(e)}: {e.message}" for e in errors]
    if msgs:
        raise ConfigError(msgs)
    full = copy.deepcopy(DEFAULTS)
    full.update(copy.deepcopy(cfg))
    full["martingale"] = {**DEFAULTS["martingale"], **cfg.get("martingale", {})}
    model = functional = None
    try:
        model = model_from_dict(full["model"])
        model.certificate
    except NonContractiveError as exc:
        msgs.append(f"model: non-contractive: {exc}")
        model = None
    except (ModelError, DomainError, ValueError, KeyError, TypeError) as exc:
        msgs.append(f"model: {exc}")
        model = None
    try:
        functional = functional_from_dict(full["functional"])
    except ValueError as exc:
        msgs.append(f"functional: {exc}")
    msgs += _semantic_errors(full, model, functional)
    if msgs:
        raise ConfigError(msgs)
    return ExperimentConfig(
        raw=full,
        model=model,
        functional=functional,
        horizons=sorted(set(full["horizons"])),
        bounds=full["bounds"],
        x_grid=full["x_grid"],
        sides=full["sides"],
        replications=full["replications"],
        m_inner=full["m_inner"],
        m_outer=full["m_outer"],
        master_seed=full["master_seed"],
        workers=full["workers"],
        output_dir=full["output"]["dir"],
        martingale=full["martingale"],
        experiment_id=full["experiment_id"],
    )


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
