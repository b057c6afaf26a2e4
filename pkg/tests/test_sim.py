import json

import numpy as np
import pytest

from parentswarm.abstraction import abstract_map
from parentswarm.errors import ConfigError, ConstraintBreach
from parentswarm.plant import SwarmState
from parentswarm.sim.config import (GeneratorSpec, bundled_config, bundled_config_dir, config_from_dict,
                                    config_to_dict, load_config, save_config)
from parentswarm.sim.engine import HAVE_COMPILED, run_problem
from parentswarm.sim.problem import build_problem
from parentswarm.sim.runner import RunLog, run_scenario, sweep

BUNDLED = sorted(p.stem for p in bundled_config_dir().glob("*.json"))
SCENARIOS = [n for n in BUNDLED if n.startswith(("pd_", "arise_"))]


def short(name, duration=0.3, **extra):
    return bundled_config(name, {"integration.duration": duration, **extra})


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_config_round_trip(name, tmp_path):
    cfg = bundled_config(name)
    save_config(cfg, tmp_path / "c.json")
    again = load_config(tmp_path / "c.json")
    assert config_to_dict(again) == config_to_dict(cfg)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{ not json")
    with pytest.raises(ConfigError, match="line 1"):
        load_config(tmp_path / "bad.json")
    d = config_to_dict(bundled_config("pd_si_4"))
    for mutate in (lambda d: d.update(bogus=1), lambda d: d.pop("schema"),
                   lambda d: d["controller"].update(type="MPC"),
                   lambda d: d["manifold"].update(tau_max=3.0),
                   lambda d: d["integration"].update(decimation=0)):
        bad = json.loads(json.dumps(d))
        mutate(bad)
        with pytest.raises(ConfigError):
            config_from_dict(bad)


def test_empty_roster_is_config_error():
    cfg = bundled_config("pd_si_4", {"swarm.roster.masses": [], "swarm.roster.kinds": [],
                                     "swarm.roster.dampings": [], "swarm.roster.positions": []})
    with pytest.raises(ConfigError):
        cfg.build_swarm()


def test_generator_is_seeded():
    a = GeneratorSpec(n=20, seed=3).build()
    b = GeneratorSpec(n=20, seed=3).build()
    c = GeneratorSpec(n=20, seed=4).build()
    np.testing.assert_array_equal(a.masses, b.masses)
    assert not np.array_equal(a.masses, c.masses)


@pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")
@pytest.mark.parametrize("name", ["pd_si_4", "pd_di_4", "pd_hetero_4", "arise_hetero_4"])
def test_engines_agree(name):
    prob = build_problem(short(name))
    a, sa, _, _ = run_problem(prob, "compiled")
    b, sb, _, _ = run_problem(build_problem(short(name)), "python")
    assert sa == sb
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=1e-9, atol=1e-11)


@pytest.mark.parametrize("engine", ["python"] + (["compiled"] if HAVE_COMPILED else []))
def test_runs_are_bit_identical(engine):
    cfg = short("arise_hetero_4")
    a = run_scenario(cfg, engine).log.data
    b = run_scenario(cfg, engine).log.data
    assert np.array_equal(a, b)


def test_equilibrium_stays_put():
    s = bundled_config("pd_si_4").build_swarm()
    # balanced initial swarm sitting on the manifold origin: M1 = 0, J_s = offset
    m = s.masses
    p = np.array([1, -1, 1, -1]) * 0.1
    p[3] = -(m[:3] @ p[:3]) / m[3]
    p *= np.sqrt(0.025 / np.sum(m * p * p))
    cfg = bundled_config("pd_si_4", {"initial.theta": 0.0, "swarm.roster.positions": p.tolist(),
                                     "integration.duration": 2.0})
    log = run_scenario(cfg).log
    for c in ("theta", "omega", "e_tau", "e_J"):
        assert np.max(np.abs(log.col(c))) <= 1e-9


def test_logged_abstract_state_matches_positions():
    res = run_scenario(short("pd_hetero_4", 2.0))
    log, prob = res.log, res.problem
    for k in range(0, len(log), 37):
        s = SwarmState(prob.swarm0.is_di, prob.swarm0.masses, prob.swarm0.dampings,
                       log.positions[k], log.velocities[k])
        a = abstract_map(s)
        assert log.col("M1")[k] == pytest.approx(a.M1, abs=1e-14)
        assert log.col("J_s")[k] == pytest.approx(a.J_s, abs=1e-14)


def test_flags_match_constraint_violations():
    res = run_scenario(short("pd_si_4", 1.0, **{"controller.k1": -40.0}), raise_on_error=False)
    log, p = res.log, res.problem.params
    assert np.array_equal(log.col("flag_theta") > 0, np.abs(log.col("theta")) > p.theta_max)
    assert np.array_equal(log.col("flag_p") > 0, np.any(np.abs(log.positions) > p.half_length, axis=1))
    assert res.metrics.violations > 0


def test_hard_stop_raises():
    cfg = short("pd_si_4", 2.0, **{"controller.k1": -40.0, "integration.hard_stop": True})
    with pytest.raises(ConstraintBreach):
        run_scenario(cfg)
    res = run_scenario(cfg, raise_on_error=False)
    assert not res.ok and res.metrics.t_fail is not None


def test_log_csv_round_trip(tmp_path):
    log = run_scenario(short("pd_di_4")).log
    log.to_csv(tmp_path / "run.csv")
    back = RunLog.from_csv(tmp_path / "run.csv")
    assert back.columns == log.columns
    assert np.array_equal(back.data, log.data)


def test_single_value_sweep_matches_run():
    cfg = short("arise_si_4", 1.0)
    row = sweep(cfg, "seed", [cfg.seed])[0]
    m = run_scenario(cfg).metrics
    assert row["rms_tracking"] == m.rms_tracking
    assert row["error"] is None


def test_sweep_collects_errors():
    rows = sweep(short("pd_si_4", 0.5), "gain", [3.0, "oops"], gain_key="controller.k1", threads=2)
    assert rows[0]["error"] is None
    assert rows[1]["error"] is not None
    with pytest.raises(ValueError):
        sweep(short("pd_si_4"), "size", [])


def test_size_sweep_builds_generated_swarms():
    rows = sweep(short("arise_hetero_4", 0.5), "size", [4, 6])
    assert [r["n_members"] for r in rows] == [4, 6]


def test_env_var_forces_python(monkeypatch):
    from parentswarm.sim import engine
    monkeypatch.setenv(engine.ENV_FORCE_PYTHON, "1")
    assert engine.default_engine() == "python"
    assert run_scenario(short("pd_si_4", 0.05)).metrics.engine == "python"


def test_missing_kernel_falls_back(monkeypatch):
    import importlib
    import sys
    from parentswarm.sim import engine
    import parentswarm.sim as simpkg
    monkeypatch.setitem(sys.modules, "parentswarm.sim._ckernel", None)
    monkeypatch.delattr(simpkg, "_ckernel", raising=False)
    try:
        reloaded = importlib.reload(engine)
        assert not reloaded.HAVE_COMPILED and reloaded.default_engine() == "python"
        with pytest.raises(RuntimeError):
            reloaded.run_problem(build_problem(short("pd_si_4", 0.05)), "compiled")
    finally:
        monkeypatch.undo()
        importlib.reload(engine)
