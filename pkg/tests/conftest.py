import json

import pytest


@pytest.fixture
def gar_config():
    return {
        "experiment_id": "gar_smoke",
        "model": {"family": "gar_vector", "A": 0.5, "B": {"kind": "uniform", "a": -1.0, "b": 1.0}},
        "functional": {"kind": "plain_sum"},
        "horizons": [4, 8],
        "bounds": [{"name": "subgaussian", "variant": "both"}, {"name": "mz", "p": 2}],
        "replications": 2000,
        "m_outer": 256,
    }


@pytest.fixture
def write_config(tmp_path):
    def write(cfg, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg), encoding="utf-8")
        return str(path)

    return write
