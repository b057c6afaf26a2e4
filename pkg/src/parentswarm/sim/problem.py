"""Flattened closed-loop problem shared by the compiled and pure-Python engines.

State vector layout: [theta, omega, p_0..p_{N-1}, v_0..v_{N-1}, mu1, mu2_0..mu2_3].
SI velocity slots are not integrated; they hold the last commanded input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..control import ARISEController, ARISEGains, ManifoldSpec, PDGains, SwarmGains, TrajectorySpec
from ..plant import Disturbance, ParentState, PhysicalParams, SwarmState
from .config import ScenarioConfig

PD, ARISE = 0, 1

# status codes returned by both engines
OK, NONFINITE, BREACH, SINGULAR, SECANT, INERTIA = 0, 1, 2, 3, 4, 5
STATUS_NAMES = {OK: "ok", NONFINITE: "non-finite state", BREACH: "constraint breach",
                SINGULAR: "singular swarm", SECANT: "secant domain", INERTIA: "non-positive inertia"}

# scalar parameter vector indices
(I_J, I_G, I_G1, I_G2, I_G3, I_G4, I_G5, I_G6, I_THMAX, I_HALFL, I_TAUMAX, I_QUAD, I_OFF,
 I_K1, I_K2, I_A1, I_A2, I_KS, I_BETA, I_GB2, I_GB3, I_GB5, I_HW,
 I_TRA, I_TRW, I_DSA, I_DSW, I_KS1, I_KS2, I_KP1, I_KP2, I_KD1, I_KD2, I_KSD,
 I_DT, I_FALPHA, I_EPS, N_SCALARS) = range(38)

SINGULAR_REL = 1e-12


def log_columns(n: int) -> list[str]:
    return (["t", "theta", "omega", "theta_d"]
            + [f"p_{i}" for i in range(n)] + [f"v_{i}" for i in range(n)]
            + ["tau_sd", "M1_d", "J_sd", "M1", "J_s", "Jdot_s", "e_tau", "e_J", "edot_tau", "edot_J",
               "theta_ddot", "V_p", "V_a", "lambda_1", "lambda_2", "lambda_3", "lambda_4", "mu1",
               "flag_theta", "flag_p"])


@dataclass
class Problem:
    mode: int
    params: PhysicalParams
    swarm0: SwarmState
    manifold: ManifoldSpec
    pd: Optional[PDGains]
    arise: Optional[ARISEGains]
    gains: SwarmGains
    traj: TrajectorySpec
    disturbance: Disturbance
    x0: np.ndarray
    dt: float
    n_steps: int
    decimation: int
    hard_stop: bool
    filter_alpha: float
    e2_0: float = 0.0
    boundary0: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.swarm0.n

    @property
    def n_state(self) -> int:
        return 2 + 2 * self.n + 5

    @property
    def columns(self) -> list[str]:
        return log_columns(self.n)

    @property
    def n_rows(self) -> int:
        return self.n_steps // self.decimation + 1

    def scalars(self) -> np.ndarray:
        P = np.zeros(N_SCALARS)
        pp = self.params
        P[I_J], P[I_G] = pp.J, pp.g
        P[I_G1:I_G6 + 1] = pp.gammas
        P[I_THMAX], P[I_HALFL], P[I_TAUMAX] = pp.theta_max, pp.half_length, self.manifold.tau_max
        P[I_QUAD], P[I_OFF] = self.manifold.quad, self.manifold.offset
        if self.pd is not None:
            P[I_K1], P[I_K2] = self.pd.k1, self.pd.k2
        if self.arise is not None:
            a = self.arise
            P[I_A1], P[I_A2], P[I_KS], P[I_BETA] = a.alpha1, a.alpha2, a.k_s, a.beta
            P[I_GB2], P[I_GB3], P[I_GB5], P[I_HW] = a.gbar2, a.gbar3, a.gbar5, a.sgn_half_width
        P[I_TRA], P[I_TRW] = self.traj.amplitude, self.traj.frequency
        P[I_DSA], P[I_DSW] = self.disturbance.amplitude, self.disturbance.frequency
        g = self.gains
        P[I_KS1], P[I_KS2] = g.K
        P[I_KP1], P[I_KP2] = g.K_p
        P[I_KD1], P[I_KD2] = g.K_d
        P[I_KSD] = g.k_sd
        P[I_DT], P[I_FALPHA], P[I_EPS] = self.dt, self.filter_alpha, SINGULAR_REL
        return P

    def gamma_matrix(self) -> np.ndarray:
        return self.arise.Gamma_matrix.copy() if self.arise is not None else np.eye(4)

    def lambda0(self) -> np.ndarray:
        return np.asarray(self.arise.lambda0, float).copy() if self.arise is not None else np.zeros(4)


def build_problem(cfg: ScenarioConfig) -> Problem:
    s = cfg.build_swarm()
    n = s.n
    x0 = np.zeros(2 + 2 * n + 5)
    x0[0], x0[1] = cfg.theta0, cfg.omega0
    x0[2:2 + n] = s.positions
    x0[2 + n:2 + 2 * n] = np.where(s.is_di, s.velocities, 0.0)
    it = cfg.integration
    dt = float(it.dt)
    T = it.filter_steps * dt
    prob = Problem(
        mode=PD if cfg.controller == "PD" else ARISE,
        params=cfg.params, swarm0=s, manifold=cfg.manifold, pd=cfg.pd, arise=cfg.arise,
        gains=cfg.swarm_gains, traj=cfg.trajectory, disturbance=cfg.disturbance, x0=x0, dt=dt,
        n_steps=int(round(it.duration / dt)), decimation=int(it.decimation),
        hard_stop=bool(it.hard_stop), filter_alpha=dt / (T + dt),
    )
    if prob.mode == ARISE:
        ctl = ARISEController(cfg.arise, cfg.trajectory, cfg.manifold, cfg.params.g)
        st = ctl.initial_state(ParentState(cfg.theta0, cfg.omega0), 0.0)
        prob.e2_0, prob.boundary0 = st.e2_0, st.boundary0
    else:
        prob.boundary0 = np.zeros(4)
    return prob
