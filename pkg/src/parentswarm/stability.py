"""Gain-condition checks, bound constants, region estimates and runtime Lyapunov monitors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import lyapunov as lyap
from .control import (ARISEGains, ManifoldSpec, PDGains, TrajectorySpec, regressor, regressor_ddot,
                      regressor_dot)
from .errors import ConfigError, NonInvertibleRhoE
from .plant import Disturbance, PhysicalParams, friction_slope

# values printed alongside the example scenarios; kept to surface disagreements
REFERENCE_PD_REGION_RADIUS2 = 0.0326
REFERENCE_ARISE_REGION_RADIUS = 0.0394
REFERENCE_JDOT_MAX = 1.9059

ZETA_SAMPLES = 10_000
ZETA_SAFETY = 1.1


@dataclass
class Condition:
    passed: bool
    margin: float
    values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"pass": bool(self.passed), "margin": lyap.safe_float(self.margin)}
        out.update({k: _plain(v) for k, v in self.values.items()})
        return out


def _plain(v):
    if isinstance(v, (float, np.floating)):
        return lyap.safe_float(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class StabilityReport:
    conditions: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    regions: dict = field(default_factory=dict)
    discrepancies: list = field(default_factory=list)
    runtime: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    @property
    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]

    def merge(self, other: "StabilityReport") -> "StabilityReport":
        self.conditions.update(other.conditions)
        self.constants.update(other.constants)
        self.regions.update(other.regions)
        self.discrepancies.extend(other.discrepancies)
        self.runtime.update(other.runtime)
        self.meta.update(other.meta)
        return self

    def to_dict(self) -> dict:
        return {
            **_plain(self.meta),
            "all_pass": self.all_pass,
            "conditions": {k: c.to_dict() for k, c in self.conditions.items()},
            "constants": _plain(self.constants),
            "regions": _plain(self.regions),
            "discrepancies": _plain(self.discrepancies),
            "runtime": _plain(self.runtime),
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _cond(margin: float, **values) -> Condition:
    return Condition(bool(margin > 0), float(margin), values)


# --------------------------------------------------------------------------- PD

def jdot_coefficients(params: PhysicalParams, gains: PDGains, K_swarm: Sequence[float],
                      manifold: ManifoldSpec, ks2_convention: str = "printed") -> dict:
    """Coefficients of the rational bound on |J_s_dot| as a function of ||z||.

    ks2_convention "printed" subtracts K_s2 in the linear numerator term,
    "abs" adds |K_s2| (the form an upper bound would normally take).
    """
    dJ = manifold.slope_max
    k1, k2 = gains.k1, gains.k2
    ks2 = float(K_swarm[1])
    if ks2_convention == "printed":
        ks2_term = -ks2
    elif ks2_convention == "abs":
        ks2_term = abs(ks2)
    else:
        raise ValueError("ks2_convention must be 'printed' or 'abs'")
    return {
        "a1": 0.5 * dJ * k1,
        "a2": dJ * (k1 * (params.J + manifold.J_sd_max) + k2 * params.gamma6) + ks2_term,
        "a3": dJ * k2 * (manifold.tau_max + params.gamma1),
        "b1": dJ * k2,
        "b2": params.J + manifold.J_sd_min,
        "dJ_max": dJ,
    }


def jdot_max_bound(params: PhysicalParams, gains: PDGains, K_swarm: Sequence[float],
                   z_norm_max: float, manifold: Optional[ManifoldSpec] = None,
                   ks2_convention: str = "printed") -> float:
    manifold = manifold or ManifoldSpec(tau_max=params.tau_max)
    c = jdot_coefficients(params, gains, K_swarm, manifold, ks2_convention)
    z = float(z_norm_max)
    return (c["a1"] * z * z + c["a2"] * z + c["a3"]) / (c["b1"] * z + c["b2"])


def check_pd_conditions(params: PhysicalParams, gains: PDGains, jdot_max: float,
                        K_swarm: Sequence[float] = (10.0, 10.0),
                        manifold: Optional[ManifoldSpec] = None) -> StabilityReport:
    manifold = manifold or ManifoldSpec(tau_max=params.tau_max)
    rep = StabilityReport()
    k2_min = jdot_max / (2.0 * math.cos(params.theta_max))
    rep.conditions["k1_positive"] = _cond(gains.k1, k1=gains.k1)
    rep.conditions["k2_exceeds_jdot_bound"] = _cond(gains.k2 - k2_min, k2=gains.k2, k2_min=k2_min)
    rep.conditions["swarm_gain_positive_definite"] = _cond(float(np.min(K_swarm)), K=list(K_swarm))
    r_main = lyap.pd_region_radius2(params.theta_max, params.J, manifold.J_sd_max, floor=1.0)
    r_half = lyap.pd_region_radius2(params.theta_max, params.J, manifold.J_sd_max, floor=0.5)
    rep.constants["J_dot_max"] = jdot_max
    rep.regions["pd_radius2"] = r_main
    rep.regions["pd_radius2_half_floor"] = r_half
    rep.regions["eta"] = max(1.0, 0.5 * (params.J + manifold.J_sd_max))
    if not math.isclose(r_main, REFERENCE_PD_REGION_RADIUS2, rel_tol=1e-3):
        rep.discrepancies.append({
            "quantity": "pd_radius2", "reference": REFERENCE_PD_REGION_RADIUS2,
            "computed": r_main, "computed_half_floor": r_half,
            "note": "neither eta = max{1, .} nor eta = max{1/2, .} reproduces the reference value",
        })
    return rep


# --------------------------------------------------------------------------- ARISE

def _friction_curvature(omega, params: PhysicalParams):
    """Second derivative of the friction torque in omega."""
    g1, g2, g3, g4, g5, _ = params.gammas

    def term(k, w):
        th = np.tanh(k * w)
        return -2.0 * k * k * th * (1.0 - th * th)

    return g1 * (term(g2, omega) - term(g3, omega)) + g4 * term(g5, omega)


def _sample_window(traj: TrajectorySpec, disturbance: Disturbance) -> float:
    periods = [traj.period]
    if disturbance.frequency:
        periods.append(2.0 * math.pi / disturbance.frequency)
    finite = [p for p in periods if math.isfinite(p)]
    return max(finite) if finite else 1.0


def zeta_bounds(params: PhysicalParams, gains: ARISEGains, traj: TrajectorySpec,
                disturbance: Disturbance, manifold: ManifoldSpec, n: int = ZETA_SAMPLES,
                safety: float = ZETA_SAFETY) -> dict:
    """Sampled sup-bounds of N_d and its rate with J_s held on the manifold range.

    N_d = (J + J_s) theta_d''' + d/dt f(theta_d') - Y_d' lambda + tau_d'.
    """
    T = _sample_window(traj, disturbance)
    t = np.linspace(0.0, T, n, endpoint=False)
    D = np.array([traj.derivatives(x) for x in t])
    lam = params.true_lambda
    gb = gains.gbar
    Yd = np.array([regressor_dot(d, gb) for d in D])
    Ydd = np.array([regressor_ddot(d, gb) for d in D])
    fs = friction_slope(D[:, 1], params)
    fc = _friction_curvature(D[:, 1], params)
    dist1 = np.array([disturbance.rate(x) for x in t])
    dist2 = np.array([disturbance.second_rate(x) for x in t])
    best_n, best_nd = 0.0, 0.0
    for Js in (manifold.J_sd_min, manifold.J_sd_max):
        Nd = (params.J + Js) * D[:, 3] + fs * D[:, 2] - Yd @ lam + dist1
        Ndd = (params.J + Js) * D[:, 4] + fc * D[:, 2] ** 2 + fs * D[:, 3] - Ydd @ lam + dist2
        best_n = max(best_n, float(np.max(np.abs(Nd))))
        best_nd = max(best_nd, float(np.max(np.abs(Ndd))))
    return {"zeta_Nd": safety * best_n, "zeta_Nd_dot": safety * best_nd,
            "window": T, "samples": n, "safety": safety}


def feedforward_rates(params: PhysicalParams, gains: ARISEGains, traj: TrajectorySpec,
                      disturbance: Disturbance, n: int = ZETA_SAMPLES) -> tuple[float, float]:
    """Sup of |d/dt| and |d2/dt2| of the zero-error feed-forward torque, sampled."""
    T = _sample_window(traj, disturbance)
    t = np.linspace(0.0, T, n, endpoint=False)
    h = t[1] - t[0]
    D = np.array([traj.derivatives(x) for x in t])
    Y = np.array([regressor(d, gains.gbar) for d in D])
    tau = -(Y @ params.true_lambda) / np.cos(D[:, 0])
    d1 = (np.roll(tau, -1) - np.roll(tau, 1)) / (2.0 * h)
    d2 = (np.roll(tau, -1) - 2.0 * tau + np.roll(tau, 1)) / (h * h)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


def rho_e_inverse(y: float, k1: float, alpha1: float) -> float:
    """Inverse of rho_E(x) = k1 + (1 + alpha1) x on x >= 0."""
    if y < k1:
        raise NonInvertibleRhoE(f"argument {y:.6g} is below rho_E(0) = {k1:.6g}")
    return (y - k1) / (1.0 + alpha1)


def check_arise_conditions(params: PhysicalParams, gains: ARISEGains, K_swarm: Sequence[float],
                           traj: TrajectorySpec, disturbance: Disturbance,
                           manifold: Optional[ManifoldSpec] = None, n: int = ZETA_SAMPLES,
                           safety: float = ZETA_SAFETY, tau_dot_max: Optional[float] = None,
                           tau_ddot_max: Optional[float] = None) -> StabilityReport:
    manifold = manifold or ManifoldSpec(tau_max=params.tau_max)
    rep = StabilityReport()
    a1, a2, ks = gains.alpha1, gains.alpha2, gains.k_s
    J = params.J
    Jmax = manifold.J_sd_max
    z = zeta_bounds(params, gains, traj, disturbance, manifold, n, safety)
    ff1, ff2 = feedforward_rates(params, gains, traj, disturbance, n)
    td = ff1 if tau_dot_max is None else tau_dot_max
    tdd = ff2 if tau_ddot_max is None else tau_ddot_max
    dJ = manifold.slope_max
    jd = dJ * td
    jdd = dJ * tdd + manifold.d2J_dtau2 * td * td

    T = z["window"]
    t = np.linspace(0.0, T, n, endpoint=False)
    G = gains.Gamma_matrix
    ygy = 0.0
    for x in t:
        d = traj.derivatives(x)
        ygy = max(ygy, abs(float(regressor(d, gains.gbar) @ G @ regressor_dot(d, gains.gbar))))

    g1, g2, g3, g4, g5, g6 = params.gammas
    gb2, gb3, gb5 = gains.gbar
    c = g1 * max(g2, gb2) - g1 * min(g3, gb3) + g4 * max(g5, gb5) + g6
    c1 = 0.5 * jd + ygy + (J + Jmax) * abs(a1 - a2) + jd + c
    c2 = (abs(1.0 + (2.0 * jd + (J + Jmax) * (a2 - a1)) * a2)
          + abs(Jmax * a1 + jdd + J * a1**2 + jd * a1 - (a1 + a2) * c))
    c3 = jdd * a1 + 2.0 * jd * a1**2 + (J + jd) * a1**3 + a1**2 * c
    c_max = max(c1, c2, c3)

    Ginv = np.linalg.inv(G)
    ev = np.linalg.eigvalsh(Ginv)
    eta1 = 0.5 * min(1.0, J + manifold.J_sd_min, float(ev.min()))
    eta2 = 0.5 * max(2.0, J + Jmax, float(ev.max()))
    eta3 = min(2.0 * a1 - 1.0, a2 - 1.0, 1.0)
    lam_min_K = float(np.min(K_swarm))

    rep.constants.update({
        "zeta_Nd": z["zeta_Nd"], "zeta_Nd_dot": z["zeta_Nd_dot"], "zeta_window": T,
        "zeta_samples": n, "zeta_safety": safety,
        "tau_dot_max": td, "tau_ddot_max": tdd, "J_dot_max": jd, "J_ddot_max": jdd,
        "Y_Gamma_Ydot_max": ygy, "friction_slope_bound": c,
        "c1": c1, "c2": c2, "c3": c3, "c_max": c_max,
        "eta1": eta1, "eta2": eta2, "eta3": eta3,
    })
    beta_min = z["zeta_Nd"] + z["zeta_Nd_dot"] / a2
    rep.conditions["alpha1_above_half"] = _cond(a1 - 0.5, alpha1=a1)
    rep.conditions["alpha2_above_one"] = _cond(a2 - 1.0, alpha2=a2)
    rep.conditions["beta_dominates_Nd"] = _cond(gains.beta - beta_min, beta=gains.beta, beta_min=beta_min)
    rep.conditions["k_s_above_cmax_over_eta3"] = _cond(
        ks - c_max / eta3 if eta3 > 0 else -math.inf, k_s=ks, k_s_min=c_max / eta3 if eta3 > 0 else None)
    rep.conditions["k_s_above_cmax_over_4eta3"] = _cond(
        ks - c_max / (4.0 * eta3) if eta3 > 0 else -math.inf, k_s=ks,
        k_s_min=c_max / (4.0 * eta3) if eta3 > 0 else None)
    rep.conditions["Gamma_positive_definite"] = _cond(float(np.linalg.eigvalsh(G).min()))
    rep.conditions["swarm_gain_positive_definite"] = _cond(lam_min_K, K=list(K_swarm))

    k1 = float(K_swarm[0])
    arg = 2.0 * eta3 - c_max / (2.0 * ks) + 2.0 * lam_min_K
    rep.regions["rho_argument"] = arg
    rep.regions["rho_E_at_zero"] = k1
    try:
        rho = rho_e_inverse(arg, k1, a1)
        radius = math.sqrt(eta1 / eta2) * rho
        rep.constants["rho_inverse"] = rho
        rep.regions["arise_radius"] = radius
        rep.conditions["arise_region_nonempty"] = _cond(radius, radius=radius)
    except NonInvertibleRhoE as exc:
        rep.constants["rho_inverse"] = None
        rep.regions["arise_radius"] = None
        rep.regions["arise_region_error"] = f"NonInvertibleRhoE: {exc}"
        rep.conditions["arise_region_nonempty"] = _cond(arg - k1, radius=None)
    radius = rep.regions["arise_radius"]
    if radius is None or not math.isclose(radius, REFERENCE_ARISE_REGION_RADIUS, rel_tol=0.1):
        rep.discrepancies.append({
            "quantity": "arise_radius", "reference": REFERENCE_ARISE_REGION_RADIUS,
            "computed": radius, "c_max": c_max,
            "note": "c_max from the friction-slope bound exceeds k_s; the region formula does not "
                    "reproduce the reference value",
        })
    return rep


# --------------------------------------------------------------------------- DI epsilon

def check_di_epsilon(K_p: Sequence[float], K_d: Sequence[float],
                     n_grid: int = lyap.DI_EPS_GRID) -> tuple[Optional[float], Condition]:
    eps = lyap.di_epsilon(K_p, K_d, n_grid)
    if eps is None:
        return None, Condition(False, -math.inf, {"epsilon": None})
    margins = np.array([lyap.di_conditions(eps, a, b) for a, b in zip(K_p, K_d)])
    return eps, Condition(True, float(margins.min()), {"epsilon": eps, "margins": margins.min(axis=0)})


# --------------------------------------------------------------------------- runtime monitors

def lyapunov_monitor(log, t_skip: float = 0.1, tol: float = 1e-9, max_allowed: float = 1e-6,
                     min_fraction: float = 0.99) -> dict:
    """Monotonicity of V = V_p + V_a (and of V_a alone) along a logged run."""
    t = log.t
    out = {"t_skip": t_skip, "tol": tol}
    for key, V in (("V", log.col("V_p") + log.col("V_a")), ("V_a", log.col("V_a"))):
        dV = np.diff(V)
        w = t[1:] > t_skip
        if not np.any(w):
            out[key] = {"fraction_nonincreasing": 1.0, "max_increase": 0.0, "samples": 0, "pass": True}
            continue
        inc = dV[w] > tol
        frac = 1.0 - float(np.mean(inc))
        worst = float(max(0.0, np.max(dV[w])))
        out[key] = {"fraction_nonincreasing": frac, "max_increase": worst,
                    "samples": int(np.sum(w)),
                    "pass": bool(frac >= min_fraction and worst <= max_allowed)}
    return out


def decomposition_check(log, prob, floor: float = 1e-9) -> dict:
    """Compare the uncoupled Lyapunov rates against the coupling rates along a run.

    Parent side (PD only): V'_p = theta w - w cos(theta) tau_sd - J_s_dot w^2 / 2 - w f(w),
    coupling V_pc = g w cos(theta) e_tau. Abstract side: V'_a from the ideal closed loop,
    V_ac = (actual rate) - V'_a.
    """
    from .plant import friction_torque
    from .sim.problem import PD

    t = log.t
    e = np.stack([log.col("e_tau"), log.col("e_J")], axis=1)
    ed = np.stack([log.col("edot_tau"), log.col("edot_J")], axis=1)
    gains = prob.gains
    if np.any(prob.swarm0.is_di):
        eps = lyap.di_epsilon(gains.K_p, gains.K_d) or 0.0
        Kp, Kd = np.asarray(gains.K_p), np.asarray(gains.K_d)
        edd = np.gradient(ed, t, axis=0) if len(t) > 2 else np.zeros_like(ed)
        actual = (np.sum(Kp * e * ed, 1) + eps * (np.sum(ed * ed, 1) + np.sum(e * edd, 1))
                  + np.sum(ed * edd, 1))
        ideal = (-eps * np.sum(Kp * e * e, 1) - eps * np.sum(Kd * e * ed, 1)
                 - np.sum((Kd - eps) * ed * ed, 1))
    else:
        actual = np.sum(e * ed, 1)
        ideal = -np.sum(np.asarray(gains.K) * e * e, 1)
    coupling = actual - ideal
    out = {}
    if prob.mode == PD:
        th, om = log.col("theta"), log.col("omega")
        tau = log.col("tau_sd")
        Jd = log.col("Jdot_s")
        vp = (th * om - om * np.cos(th) * tau - 0.5 * Jd * om * om
              - om * friction_torque(om, prob.params))
        vpc = prob.params.g * om * np.cos(th) * e[:, 0]
        ideal = ideal + vp
        coupling = coupling + vpc
        out["parent_uncoupled_negative_fraction"] = float(np.mean(vp[t > 0] <= 0)) if np.any(t > 0) else 1.0
    else:
        out["parent_side"] = "not evaluated for the ARISE parent"
    active = np.linalg.norm(e, axis=1) > floor
    holds = np.abs(ideal) > np.abs(coupling)
    out["samples"] = int(np.sum(active))
    out["holds_fraction"] = float(np.mean(holds[active])) if np.any(active) else 1.0
    return out


def containment_check(log, prob, e_tau_max: float, e_J_max: float) -> dict:
    """Tube radii around the desired trajectories and pointwise membership of logged errors."""
    th_d = log.col("theta_d")
    r_p = float(prob.params.theta_max - np.max(np.abs(th_d)))
    om_d = np.array([prob.traj.derivatives(x)[1] for x in log.t])
    w_p = np.hypot(th_d - log.col("theta"), om_d - log.col("omega"))
    r_a = float(min(e_tau_max, e_J_max))
    w_a = np.hypot(log.col("e_tau"), log.col("e_J"))
    flags = (log.col("flag_theta") > 0) | (log.col("flag_p") > 0)
    inside = (w_p <= r_p) & (w_a <= r_a)
    return {
        "parent_tube_radius": r_p, "abstract_tube_radius": r_a,
        "max_parent_error": float(np.max(w_p)), "max_abstract_error": float(np.max(w_a)),
        "inside_fraction": float(np.mean(inside)), "constraint_flags": int(np.sum(flags)),
        "parent_tube_nonempty": r_p > 0,
    }


# --------------------------------------------------------------------------- audit

AUDIT_KEYS = {"z_norm_max", "ks2_convention", "e_tau_max", "e_J_max", "tau_dot_max",
              "tau_ddot_max", "zeta_samples", "zeta_safety"}


def initial_error_norm(cfg) -> float:
    """||(theta0, omega0, M1(0), J_s(0))||: abstract part measured from the abstract origin."""
    s = cfg.build_swarm()
    M1 = float(np.sum(s.masses * s.positions))
    Js = float(np.sum(s.masses * s.positions**2))
    return math.sqrt(cfg.theta0**2 + cfg.omega0**2 + M1**2 + Js**2)


def audit(cfg, log=None, prob=None) -> StabilityReport:
    """Full pre-check for a scenario, optionally extended with runtime checks on a log."""
    opts = dict(cfg.stability or {})
    unknown = set(opts) - AUDIT_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key stability.{k}", f"stability.{k}")
    params, manifold, sg = cfg.params, cfg.manifold, cfg.swarm_gains
    swarm = cfg.build_swarm()
    rep = StabilityReport(meta={"scenario": cfg.name, "controller": cfg.controller})
    if cfg.controller == "PD":
        z0 = initial_error_norm(cfg)
        zmax = opts.get("z_norm_max")
        zmax = z0 if zmax is None else float(zmax)
        conv = opts.get("ks2_convention") or "printed"
        jd = jdot_max_bound(params, cfg.pd, sg.K, zmax, manifold, conv)
        jd_other = jdot_max_bound(params, cfg.pd, sg.K, zmax, manifold,
                                  "abs" if conv == "printed" else "printed")
        rep.merge(check_pd_conditions(params, cfg.pd, jd, sg.K, manifold))
        rep.constants.update({"z_norm_max": zmax, "ks2_convention": conv,
                              "J_dot_max_other_convention": jd_other,
                              "jdot_coefficients": jdot_coefficients(params, cfg.pd, sg.K, manifold, conv)})
        if not math.isclose(jd, REFERENCE_JDOT_MAX, rel_tol=0.05):
            rep.discrepancies.append({"quantity": "J_dot_max", "reference": REFERENCE_JDOT_MAX,
                                      "computed": jd})
        r2 = rep.regions["pd_radius2"]
        rep.conditions["initial_error_in_region"] = _cond(r2 - z0 * z0, z0_norm2=z0 * z0, radius2=r2)
    else:
        rep.merge(check_arise_conditions(
            params, cfg.arise, sg.K, cfg.trajectory, cfg.disturbance, manifold,
            int(opts.get("zeta_samples") or ZETA_SAMPLES), float(opts.get("zeta_safety") or ZETA_SAFETY),
            opts.get("tau_dot_max"), opts.get("tau_ddot_max")))
    if np.any(swarm.is_di):
        eps, cond = check_di_epsilon(sg.K_p, sg.K_d)
        rep.conditions["di_epsilon_witness"] = cond
        rep.constants["epsilon"] = eps
    if log is not None and prob is not None:
        rep.runtime["lyapunov"] = lyapunov_monitor(log)
        rep.runtime["decomposition"] = decomposition_check(log, prob)
        rep.runtime["containment"] = containment_check(
            log, prob, float(opts.get("e_tau_max", 2.0 / params.g)), float(opts.get("e_J_max", 0.03)))
    return rep
