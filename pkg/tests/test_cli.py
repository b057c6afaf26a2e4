import csv
import json

import pytest

from parentswarm.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_outputs(tmp_path):
    rc = run("simulate", "--config", "pd_si_4", "--out", tmp_path, "--set", "integration.duration=2.0")
    assert rc == 0
    assert {"run.csv", "metrics.json", "stability_report.json"} <= {p.name for p in tmp_path.iterdir()}
    metrics = json.loads((tmp_path / "metrics.json").read_text())
    assert metrics["status"] == "ok" and metrics["n_members"] == 4
    report = json.loads((tmp_path / "stability_report.json").read_text())
    assert "lyapunov" in report["runtime"]
    with open(tmp_path / "run.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["t", "theta", "omega", "theta_d"]


def test_simulate_accepts_a_path(tmp_path):
    from parentswarm.sim.config import bundled_config_dir
    rc = run("simulate", "--config", bundled_config_dir() / "pd_di_4.json", "--out", tmp_path,
             "--set", "integration.duration=0.5")
    assert rc == 0


def test_config_errors_exit_2(tmp_path, capsys):
    assert run("simulate", "--config", tmp_path / "none.json", "--out", tmp_path) == 2
    assert run("simulate", "--config", "pd_si_4", "--out", tmp_path, "--set", "params.J=-1") == 2
    assert run("simulate", "--config", "pd_si_4", "--out", tmp_path, "--set", "nonsense") == 2
    assert run("simulate", "--config", "pd_si_4", "--out", tmp_path, "--set", "swarm.roster.masses=[]") == 2
    assert "config error" in capsys.readouterr().err


def test_runtime_divergence_exit_3(tmp_path):
    rc = run("simulate", "--config", "pd_si_4", "--out", tmp_path, "--set", "controller.k1=-40",
             "--set", "integration.hard_stop=true")
    assert rc == 3
    assert json.loads((tmp_path / "metrics.json").read_text())["status"] == "constraint breach"


def test_strict_stability_exit_4(tmp_path):
    assert run("check-stability", "--config", "arise_si_4", "--out", tmp_path, "--strict-stability") == 4
    assert run("check-stability", "--config", "arise_si_4", "--out", tmp_path) == 0
    assert run("simulate", "--config", "arise_si_4", "--out", tmp_path, "--strict-stability") == 4
    assert not (tmp_path / "run.csv").exists()


def test_check_stability_pd(tmp_path, capsys):
    assert run("check-stability", "--config", "pd_si_4", "--out", tmp_path, "--strict-stability") == 0
    rep = json.loads((tmp_path / "stability_report.json").read_text())
    assert rep["all_pass"] and rep["regions"]["pd_radius2"] == pytest.approx(0.02)
    assert "0.0326" in capsys.readouterr().out


def test_design_lqr(tmp_path):
    assert run("design-lqr", "--config", "pd_si_4", "--out", tmp_path) == 0
    doc = json.loads((tmp_path / "lqr_gains.json").read_text())
    assert doc["k1"] == pytest.approx(3.1623, abs=1e-4)
    assert doc["opposite_sign"]["k1"] == pytest.approx(3.1623, abs=1e-4)
    assert run("design-lqr", "--config", "pd_si_4", "--out", tmp_path, "--set", "lqr.R=0") == 2


def test_atlas_outputs(tmp_path):
    rc = run("atlas", "--config", "atlas_pair_unit", "--out", tmp_path,
             "--set", "atlas.n_M1=10", "--set", "atlas.n_J=10", "--set", "atlas.n_tau=11")
    assert rc == 0
    cert = json.loads((tmp_path / "manifold_cert.json").read_text())
    assert len(cert["points"]) == 11
    with open(tmp_path / "edges.csv") as fh:
        assert next(csv.reader(fh)) == ["edge", "M1", "J_s"]
    assert run("atlas", "--config", "atlas_pair_unit", "--out", tmp_path, "--set", "atlas.bogus=1") == 2


def test_seed_flag_reaches_generator(tmp_path):
    base = ["sweep", "--config", "arise_hetero_20", "--axis", "size", "--values", "6",
            "--set", "integration.duration=0.5"]
    assert run(*base, "--out", tmp_path / "a", "--seed", 1) == 0
    assert run(*base, "--out", tmp_path / "b", "--seed", 2) == 0
    a = json.loads((tmp_path / "a" / "sweep.json").read_text())[0]
    b = json.loads((tmp_path / "b" / "sweep.json").read_text())[0]
    assert a["max_displacement"] != b["max_displacement"]


def test_sweep_outputs(tmp_path):
    rc = run("sweep", "--config", "pd_si_4", "--axis", "gain", "--gain-key", "controller.k2",
             "--values", "2.0,3.2859", "--out", tmp_path, "--threads", 2,
             "--set", "integration.duration=1.0")
    assert rc == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["value"] for r in rows] == [2.0, 3.2859]
    with open(tmp_path / "sweep.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2
    assert run("sweep", "--config", "pd_si_4", "--axis", "gain", "--values", "1", "--out", tmp_path) == 2
    assert run("sweep", "--config", "pd_si_4", "--values", ",", "--out", tmp_path) == 2
