"""Pure-Python closed-loop engine assembled from the library control laws.

The plane acceleration and the SI commands are coupled: SI velocities feed
J_s_dot, and the desired abstract rate depends on theta_ddot. Every quantity in
that loop is affine in theta_ddot, so each evaluation probes the laws at
theta_ddot = 0 and 1 and solves the scalar equation exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..control import (ARISEController, ARISEState, DesiredAbstract, pd_parent_control, sgn,
                       swarm_inputs)
from ..errors import NonFiniteState, NonPositiveInertia, SecantDomain, SingularSwarm
from ..plant import ParentState, SwarmState, friction_torque
from .integrate import rk4_step
from .problem import (BREACH, INERTIA, NONFINITE, OK, PD, SECANT, SINGULAR, Problem)


@dataclass
class _Eval:
    dx: np.ndarray
    desired: DesiredAbstract
    theta_ddot: float
    v_eff: np.ndarray
    tau_raw: float
    e2: float
    lambda_hat: np.ndarray
    theta_d: float


class PythonEngine:
    name = "python"

    def __init__(self, prob: Problem):
        self.prob = prob
        self.n = prob.n
        s = prob.swarm0
        self.is_di, self.m, self.c = s.is_di, s.masses, s.dampings
        self.half_length = prob.params.half_length
        if prob.mode != PD:
            self.ctl = ARISEController(prob.arise, prob.traj, prob.manifold, prob.params.g)

    # ------------------------------------------------------------------ evaluation
    def _desired(self, t, xp, X, theta_ddot, sat, sign):
        prob = self.prob
        if prob.mode == PD:
            des = pd_parent_control(xp, prob.pd, prob.manifold, prob.params.g, theta_ddot, sat)
            return des, None
        st = ARISEState(mu1=X[-5], mu2=X[-4:], e2_0=prob.e2_0, boundary0=prob.boundary0)
        out = self.ctl.evaluate(t, xp, st, theta_ddot, sign, sat)
        return out.desired, out

    def evaluate(self, t, X, sat, sign, add) -> _Eval:
        prob, n = self.prob, self.n
        theta, omega = X[0], X[1]
        p, v = X[2:2 + n], X[2 + n:2 + 2 * n]
        xp = ParentState(theta, omega)
        swarm = SwarmState(self.is_di, self.m, self.c, p, v)
        m = self.m
        M1, J_s = float(np.sum(m * p)), float(np.sum(m * p * p))

        def with_accel(des):
            return replace(des, M1_ddot=add[0], Jddot_s=add[1])

        des0, _ = self._desired(t, xp, X, 0.0, sat, sign)
        des1, _ = self._desired(t, xp, X, 1.0, sat, sign)
        _, v0 = swarm_inputs(swarm, with_accel(des0), prob.gains, self.half_length)
        _, v1 = swarm_inputs(swarm, with_accel(des1), prob.gains, self.half_length)
        Jd0 = float(np.sum(2.0 * m * p * v0))
        Jd1 = float(np.sum(2.0 * m * p * v1)) - Jd0
        pp = prob.params
        A = (-math.cos(theta) * pp.g * M1 - float(friction_torque(omega, pp))
             - prob.disturbance(t))
        denom = pp.J + J_s + omega * Jd1
        if not denom > 0:
            raise NonPositiveInertia(f"effective inertia {denom} is not positive")
        theta_ddot = (A - omega * Jd0) / denom

        des, out = self._desired(t, xp, X, theta_ddot, sat, sign)
        des = with_accel(des)
        u, v_eff = swarm_inputs(swarm, des, prob.gains, self.half_length)

        dx = np.zeros_like(X)
        dx[0], dx[1] = omega, theta_ddot
        dx[2:2 + n] = np.where(self.is_di, v, u)
        dx[2 + n:2 + 2 * n] = np.where(self.is_di, (u - self.c * v) / m, 0.0)
        if out is not None:
            dx[-5] = out.mu1_dot
            dx[-4:] = out.mu2_dot
            return _Eval(dx, des, theta_ddot, v_eff, out.tau_raw, out.e2, out.lambda_hat,
                         float(prob.traj.derivatives(t)[0]))
        raw = prob.pd.k1 * theta + prob.pd.k2 * omega
        return _Eval(dx, des, theta_ddot, v_eff, raw, 0.0, np.zeros(4), 0.0)

    def _frozen(self, t, X):
        """Clamp status and sign of e2 at the start of a step."""
        prob = self.prob
        xp = ParentState(X[0], X[1])
        if prob.mode == PD:
            raw = prob.pd.k1 * X[0] + prob.pd.k2 * X[1]
            return abs(raw) > prob.manifold.tau_max, None
        st = ARISEState(mu1=X[-5], mu2=X[-4:], e2_0=prob.e2_0, boundary0=prob.boundary0)
        out = self.ctl.evaluate(t, xp, st, 0.0)
        sign = sgn(out.e2) if prob.arise.sgn_half_width == 0 else None
        return abs(out.tau_raw) > prob.manifold.tau_max, sign

    # ------------------------------------------------------------------ run loop
    def run(self):
        prob, n = self.prob, self.n
        dt, dec = prob.dt, prob.decimation
        ncol = len(prob.columns)
        log = np.zeros((prob.n_rows, ncol))
        X = prob.x0.copy()
        add = np.zeros(2)
        prev_rate: Optional[np.ndarray] = None
        row = 0
        status, t_fail = OK, math.nan
        for k in range(prob.n_steps + 1):
            t = k * dt
            try:
                sat, sign = self._frozen(t, X)
                ev = self.evaluate(t, X, sat, sign, add)
            except SingularSwarm:
                status, t_fail = SINGULAR, t
                break
            except SecantDomain:
                status, t_fail = SECANT, t
                break
            except NonPositiveInertia:
                status, t_fail = INERTIA, t
                break
            rate = ev.desired.rate
            if prev_rate is None:
                prev_rate = rate
            add = add + prob.filter_alpha * ((rate - prev_rate) / dt - add)
            prev_rate = rate
            X[2 + n:2 + 2 * n] = ev.v_eff
            p = X[2:2 + n]
            flag_th = abs(X[0]) > prob.params.theta_max
            flag_p = bool(np.any(np.abs(p) > prob.params.half_length))
            if k % dec == 0:
                log[row] = self._row(t, X, ev, flag_th, flag_p)
                row += 1
            if prob.hard_stop and (flag_th or flag_p):
                status, t_fail = BREACH, t
                break
            if k == prob.n_steps:
                break
            try:
                X = rk4_step(lambda tt, xx: self.evaluate(tt, xx, sat, sign, add).dx, t, X, dt)
            except NonFiniteState:
                status, t_fail = NONFINITE, t + dt
                break
            except SingularSwarm:
                status, t_fail = SINGULAR, t
                break
            except SecantDomain:
                status, t_fail = SECANT, t
                break
            except NonPositiveInertia:
                status, t_fail = INERTIA, t
                break
        return log[:row], status, t_fail

    def _row(self, t, X, ev: _Eval, flag_th, flag_p):
        n, m = self.n, self.m
        p = X[2:2 + n]
        v = ev.v_eff
        M1, J_s = np.sum(m * p), np.sum(m * p * p)
        Jdot = np.sum(2.0 * m * p * v)
        M1_dot = np.sum(m * v)
        d = ev.desired
        return np.concatenate([
            [t, X[0], X[1], ev.theta_d], p, v,
            [d.tau, d.M1, d.J_s, M1, J_s, Jdot, d.M1 - M1, d.J_s - J_s,
             d.M1_dot - M1_dot, d.Jdot_s - Jdot, ev.theta_ddot, 0.0, 0.0],
            ev.lambda_hat, [X[-5], float(flag_th), float(flag_p)],
        ])

