import json

from lipdev.cli import main


def test_validate_ok(gar_config, write_config, capsys):
    assert main(["validate", write_config(gar_config)]) == 0
    assert "rho=0.5" in capsys.readouterr().out


def test_validate_bad(gar_config, write_config, capsys):
    gar_config["model"]["A"] = 2.0
    assert main(["validate", write_config(gar_config)]) == 1
    assert "non-contractive" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "none.json")]) == 1


def test_run_writes_reports(gar_config, write_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", write_config(gar_config), "--out", str(out), "--replications", "500", "--seed", "3"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["constants.json", "manifest.json", "results.csv"]
    assert json.loads((out / "manifest.json").read_text())["master_seed"] == 3


def test_bounds_only(gar_config, write_config, tmp_path):
    assert main(["bounds-only", write_config(gar_config), "--out", str(tmp_path)]) == 0
    line = (tmp_path / "results.csv").read_text().splitlines()[1].split(",")
    assert line[6] == ""


def test_domination_failure_exit_code(gar_config, write_config, tmp_path):
    # a supplied constant that is far too small makes the bound fail
    gar_config["bounds"] = [{"name": "weak_vbe", "p": 1.5, "A": 1e-6}]
    gar_config["x_grid"] = [0.5, 1.0]
    assert main(["run", write_config(gar_config), "--out", str(tmp_path)]) == 3


def test_runtime_error_exit_code(gar_config, write_config, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", write_config(gar_config), "--out", str(blocker / "x")]) == 2


def test_martingale_check(gar_config, write_config, tmp_path, capsys):
    gar_config["martingale"] = {"n": 5, "replications": 300}
    assert main(["martingale-check", write_config(gar_config), "--out", str(tmp_path)]) == 0
    assert "violations=0" in capsys.readouterr().out
    assert json.loads((tmp_path / "martingale.json").read_text())["exact"] is True
