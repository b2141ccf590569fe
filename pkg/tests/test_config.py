import json

import pytest

from lipdev.config import ConfigError, parse_config, validate_config


def test_minimal_gar(gar_config):
    cfg = parse_config(json.dumps(gar_config))
    assert cfg.model.family == "gar_vector"
    assert cfg.horizons == [4, 8]
    assert cfg.replications == 2000 and cfg.master_seed == 0
    assert cfg.raw["x_grid"] == {"auto": 6}


def test_non_contractive(gar_config):
    gar_config["model"]["A"] = 1.5
    with pytest.raises(ConfigError, match="non-contractive"):
        validate_config(gar_config)


def test_unknown_family(gar_config):
    gar_config["model"]["family"] = "garch_vector"
    with pytest.raises(ConfigError):
        validate_config(gar_config)


def test_all_errors_listed(gar_config):
    gar_config["colour"] = "red"
    gar_config["replications"] = 5
    del gar_config["horizons"]
    with pytest.raises(ConfigError) as info:
        validate_config(gar_config)
    msg = " ".join(info.value.errors)
    assert len(info.value.errors) >= 3
    assert "colour" in msg and "horizons" in msg and "replications" in msg


def test_unknown_bound_key(gar_config):
    gar_config["bounds"] = [{"name": "mz", "p": 2, "q": 3}]
    with pytest.raises(ConfigError):
        validate_config(gar_config)


def test_missing_bound_parameter(gar_config):
    gar_config["bounds"] = [{"name": "fuk_nagaev", "p": 2}]
    with pytest.raises(ConfigError, match="delta"):
        validate_config(gar_config)


@pytest.mark.parametrize(
    "bound,fragment",
    [({"name": "weak_vbe", "p": 2.5}, "strictly between"), ({"name": "mz", "p": 1.5}, "p must be >= 2"),
     ({"name": "semiexp", "alpha": 1.2}, "alpha"), ({"name": "vbe", "p": 3}, "(1, 2]")],
)
def test_semantic_domains(gar_config, bound, fragment):
    gar_config["bounds"] = [bound]
    with pytest.raises(ConfigError, match=fragment.replace("(", r"\(").replace("]", r"\]")):
        validate_config(gar_config)


def test_gar_corollary_needs_gar(gar_config):
    gar_config["model"] = {"family": "arch", "a": 0.5, "b": 1.0, "noise": {"kind": "rademacher"}}
    gar_config["bounds"] = [{"name": "gar_corollary", "p": 2}]
    with pytest.raises(ConfigError, match="gar_vector"):
        validate_config(gar_config)


def test_plain_sum_needs_scalar(gar_config):
    gar_config["model"].update(dim=2, initial=[0.0, 0.0])
    with pytest.raises(ConfigError, match="scalar"):
        validate_config(gar_config)


def test_invalid_json():
    with pytest.raises(ConfigError, match="invalid JSON"):
        parse_config("{not json")


def test_schedules_and_laws(gar_config):
    gar_config["model"] = {
        "family": "arch",
        "a": {"schedule": [0.2, 0.4, 0.5]},
        "b": 1.0,
        "noise": [{"kind": "gaussian"}, {"kind": "uniform", "a": -1, "b": 1}],
    }
    gar_config["functional"] = {"kind": "coordinate_sum"}
    cfg = validate_config(gar_config)
    assert cfg.model.a(10) == 0.5
