import csv
import io
import json
import os

import pytest

from lipdev.config import validate_config
from lipdev.experiment import CSV_COLUMNS, ReportBundle, emit_reports, run_experiment, write_csv


def _run(cfg, **kw):
    return run_experiment(validate_config(cfg), **kw)


def test_rows_and_columns(gar_config, tmp_path):
    bundle = _run(gar_config)
    files = emit_reports(bundle, str(tmp_path / "out"))
    with open(files[0], newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == CSV_COLUMNS
    # 2 variants x 6 grid points x 2 sides + 1 moment row, per horizon
    assert len(rows) == 2 * (2 * 6 * 2 + 1)
    assert {r["dominated"] for r in rows} <= {"true", "false"}
    assert {r["clipped"] for r in rows} <= {"true", "false"}
    assert all(r["seed"] == "0" for r in rows)


def test_crlf_and_round_trip_floats(gar_config, tmp_path):
    bundle = _run(gar_config)
    emit_reports(bundle, str(tmp_path))
    raw = (tmp_path / "results.csv").read_bytes()
    assert raw.count(b"\r\n") == len(bundle.rows) + 1
    first = bundle.rows[0]
    line = raw.split(b"\r\n")[1].decode().split(",")
    assert float(line[CSV_COLUMNS.index("x")]) == first["x"]
    assert float(line[CSV_COLUMNS.index("bound_value")]) == first["bound_value"]


def test_empty_bounds_simulation_only(gar_config, tmp_path):
    gar_config["bounds"] = []
    bundle = _run(gar_config)
    assert bundle.rows == []
    emit_reports(bundle, str(tmp_path))
    assert (tmp_path / "results.csv").read_bytes() == (",".join(CSV_COLUMNS) + "\r\n").encode()


def test_one_row():
    buf = io.StringIO()
    row = {c: None for c in CSV_COLUMNS}
    row.update(experiment_id="e", n=4, x=1.0, dominated=True, clipped=False, bound_value=0.1)
    path = os.path.join(os.environ.get("TMPDIR", "/tmp"), "lipdev_one_row.csv")
    write_csv([row], path)
    with open(path, newline="") as fh:
        lines = fh.read().split("\r\n")
    assert lines[1] == "e,,4,1,,,,,,,0.10000000000000001,,,false,true,,"


def test_determinism(gar_config, tmp_path):
    a = emit_reports(_run(gar_config), str(tmp_path / "a"))[0]
    b = emit_reports(_run(gar_config, workers=3), str(tmp_path / "b"))[0]
    assert open(a, "rb").read() == open(b, "rb").read()


def test_seed_override_changes_output(gar_config):
    a = _run(gar_config)
    b = _run(gar_config, seed=11)
    assert b.rows[0]["seed"] == 11
    assert [r["empirical_tail"] for r in a.rows] != [r["empirical_tail"] for r in b.rows]


def test_bounds_only_leaves_empirical_blank(gar_config):
    bundle = _run(gar_config, simulate=False)
    assert all(r["empirical_tail"] is None and r["dominated"] is None for r in bundle.rows)


def test_constants_provenance(gar_config, tmp_path):
    gar_config["bounds"] = [{"name": "subgaussian", "epsilon": 0.5}, {"name": "fuk_nagaev", "p": 2, "delta": 1}]
    bundle = _run(gar_config)
    c = bundle.constants["constants"]["n=8"]
    assert c["subgaussian"]["epsilon"]["provenance"] == "supplied"
    assert c["fuk_nagaev"]["C1"]["provenance"] == "estimated"
    assert c["fuk_nagaev"]["C1"]["se"] >= 0
    emit_reports(bundle, str(tmp_path))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["version"] and manifest["config"]["experiment_id"] == "gar_smoke"
    assert manifest["master_seed"] == 0


def test_failures_are_annotated(gar_config):
    # a supplied Bernstein epsilon of 0 is a domain error; other bounds still run
    gar_config["bounds"] = [{"name": "subgaussian", "epsilon": 0}, {"name": "mz", "p": 2}]
    bundle = _run(gar_config)
    assert any(a["bound"] == "subgaussian" for a in bundle.annotations)
    assert any(r["bound_name"] == "mz" for r in bundle.rows)


def test_explicit_grid_and_domination(gar_config):
    gar_config["x_grid"] = [1.0, 2.0]
    gar_config["bounds"] = [{"name": "semiexp", "alpha": 0.5}]
    bundle = _run(gar_config)
    assert sorted({r["x"] for r in bundle.rows}) == [1.0, 2.0]
    assert bundle.domination_failures == []


def test_unwritable_path(gar_config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_reports(ReportBundle([], {}, {}), str(blocker / "sub"))


def test_mz_bound_is_exact_in_the_equality_case(gar_config):
    # point-mass A with Rademacher B: H_k = 1 and ||S_n||_2^2 = sum K_{n-k}^2
    gar_config["model"]["B"] = {"kind": "rademacher"}
    gar_config["bounds"] = [{"name": "mz", "p": 2}]
    bundle = _run(gar_config, replications=20000)
    row = next(r for r in bundle.rows if r["n"] == 4)
    assert row["bound_value"] == pytest.approx((1 + 1.5**2 + 1.75**2) ** 0.5, rel=1e-12)
    assert row["ci_low"] <= row["bound_value"] <= row["ci_high"] * 1.01
