import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parentswarm import stability as stab
from parentswarm.control import ARISEGains, ManifoldSpec, PDGains, TrajectorySpec
from parentswarm.errors import ConfigError, NonInvertibleRhoE
from parentswarm.plant import Disturbance, PhysicalParams
from parentswarm.sim.config import bundled_config
from parentswarm.sim.runner import run_scenario

P = PhysicalParams()
PD = PDGains(3.1623, 3.2859)
Z0 = 0.107596


def test_initial_error_norm_for_pd_config():
    assert stab.initial_error_norm(bundled_config("pd_si_4")) == pytest.approx(Z0, abs=1e-6)


def test_jdot_bound_printed_convention():
    jd = stab.jdot_max_bound(P, PD, (10.0, 10.0), Z0)
    assert jd == pytest.approx(stab.REFERENCE_JDOT_MAX, rel=0.05)
    other = stab.jdot_max_bound(P, PD, (10.0, 10.0), Z0, ks2_convention="abs")
    assert other > 2 * jd
    with pytest.raises(ValueError):
        stab.jdot_max_bound(P, PD, (10.0, 10.0), Z0, ks2_convention="signed")


def test_jdot_coefficients_by_hand():
    c = stab.jdot_coefficients(P, PD, (10.0, 10.0), ManifoldSpec())
    dJ = 2 * 0.0125 * 5.0
    assert c["dJ_max"] == pytest.approx(dJ)
    assert c["a1"] == pytest.approx(0.5 * dJ * 3.1623)
    assert c["b2"] == pytest.approx(0.525)
    assert c["a3"] == pytest.approx(dJ * 3.2859 * 5.01)


def test_pd_conditions_and_region():
    rep = stab.check_pd_conditions(P, PD, 1.87)
    assert rep.all_pass
    assert rep.regions["pd_radius2"] == pytest.approx(0.02)
    flagged = [d for d in rep.discrepancies if d["quantity"] == "pd_radius2"]
    assert flagged and flagged[0]["reference"] == 0.0326


@given(st.floats(0.01, 20), st.floats(0.01, 20), st.floats(0.1, 5))
def test_pd_margin_monotone_in_k2(k2a, k2b, jd):
    lo, hi = sorted((k2a, k2b))
    m_lo = stab.check_pd_conditions(P, PDGains(3.0, lo), jd).conditions["k2_exceeds_jdot_bound"]
    m_hi = stab.check_pd_conditions(P, PDGains(3.0, hi), jd).conditions["k2_exceeds_jdot_bound"]
    assert m_lo.margin <= m_hi.margin
    assert not (m_lo.passed and not m_hi.passed)


@given(st.floats(0.02, 1.5), st.floats(0.02, 1.5))
def test_pd_region_monotone_in_theta_max(a, b):
    lo, hi = sorted((a, b))
    r = lambda t: stab.check_pd_conditions(PhysicalParams(theta_max=t), PD, 1.0).regions["pd_radius2"]  # noqa: E731
    assert r(lo) <= r(hi)


def test_rho_inverse():
    assert stab.rho_e_inverse(12.0, 10.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(NonInvertibleRhoE):
        stab.rho_e_inverse(5.0, 10.0, 1.0)


def arise_report(Gamma=(10.0, 1.0, 1.0, 10.0), **kw):
    g = ARISEGains(Gamma=Gamma, **kw)
    return stab.check_arise_conditions(P, g, (10.0, 10.0), TrajectorySpec(0.7, 0.015 * math.pi),
                                       Disturbance(0.1, 0.5), n=2000)


def test_arise_constants():
    rep = arise_report()
    c = rep.constants
    assert c["friction_slope_bound"] == pytest.approx(24.0)
    assert c["c_max"] == max(c["c1"], c["c2"], c["c3"])
    assert c["eta3"] == pytest.approx(1.0)
    assert rep.conditions["beta_dominates_Nd"].values["beta_min"] == pytest.approx(
        c["zeta_Nd"] + c["zeta_Nd_dot"] / 2.0)
    assert not rep.conditions["arise_region_nonempty"].passed
    assert any(d["quantity"] == "arise_radius" for d in rep.discrepancies)


@given(st.floats(0.1, 10))
@settings(max_examples=10, deadline=None)
def test_gamma_term_scales_linearly(scale):
    base = arise_report(Gamma=(1.0,) * 4).constants
    scaled = arise_report(Gamma=(scale,) * 4).constants
    assert scaled["Y_Gamma_Ydot_max"] == pytest.approx(scale * base["Y_Gamma_Ydot_max"], rel=1e-9)
    # c1 is affine in the Gamma term with unit slope
    delta = scaled["Y_Gamma_Ydot_max"] - base["Y_Gamma_Ydot_max"]
    assert scaled["c1"] - base["c1"] == pytest.approx(delta, rel=1e-9, abs=1e-12)


def test_zeta_bounds_grow_with_disturbance():
    g = ARISEGains()
    tr = TrajectorySpec(0.7, 0.015 * math.pi)
    small = stab.zeta_bounds(P, g, tr, Disturbance(0.1, 0.5), ManifoldSpec(), n=2000)
    big = stab.zeta_bounds(P, g, tr, Disturbance(1.0, 0.5), ManifoldSpec(), n=2000)
    assert big["zeta_Nd"] > small["zeta_Nd"]
    assert small["window"] == pytest.approx(2 / 0.015)


def test_di_epsilon_condition():
    eps, cond = stab.check_di_epsilon([10.0, 10.0], [5.0, 5.0])
    assert eps is not None and cond.passed
    eps, cond = stab.check_di_epsilon([-1.0, 10.0], [5.0, 5.0])
    assert eps is None and not cond.passed


def test_pd_audit_all_pass():
    rep = stab.audit(bundled_config("pd_di_4"))
    assert rep.all_pass, rep.failed
    assert "di_epsilon_witness" in rep.conditions
    assert rep.regions["pd_radius2"] == pytest.approx(0.02)


def test_audit_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        stab.audit(bundled_config("pd_si_4", {"stability.bogus": 1}))


def test_runtime_sections_present():
    cfg = bundled_config("pd_hetero_4")
    res = run_scenario(cfg)
    rep = stab.audit(cfg, res.log, res.problem)
    rt = rep.to_dict()["runtime"]
    assert set(rt) == {"lyapunov", "decomposition", "containment"}
    assert rt["containment"]["constraint_flags"] == 0
    assert rt["lyapunov"]["V_a"]["pass"]


def test_report_json_is_strict(tmp_path):
    import json
    rep = stab.audit(bundled_config("arise_si_4"))
    rep.to_json(tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert "Infinity" not in text and "NaN" not in text
    assert json.loads(text)["all_pass"] is False
