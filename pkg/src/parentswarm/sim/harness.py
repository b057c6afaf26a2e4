"""Swarm-only tracking harness.

Drives a swarm toward an analytic desired abstract trajectory with the parent
removed, so the abstract closed loop can be checked against its target
dynamics without the parent coupling or the a_d differentiation filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..control import DesiredAbstract, ManifoldSpec, SwarmGains, desired_from_torque, swarm_inputs
from ..plant import SwarmState
from .integrate import rk4_step


@dataclass(frozen=True)
class TorqueReference:
    """tau_d(t) = offset + amplitude sin(frequency t), placed on the manifold."""

    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 0.0
    g: float = 9.81

    def __call__(self, t: float, manifold: ManifoldSpec) -> DesiredAbstract:
        w, A = self.frequency, self.amplitude
        tau = self.offset + A * math.sin(w * t)
        tau_dot = A * w * math.cos(w * t)
        tau_ddot = -A * w * w * math.sin(w * t)
        return desired_from_torque(tau, tau_dot, manifold, self.g, tau_ddot)


@dataclass
class HarnessLog:
    t: np.ndarray
    a: np.ndarray         # (M1, J_s)
    a_rate: np.ndarray    # from effective velocities
    a_d: np.ndarray
    a_d_rate: np.ndarray
    a_d_accel: np.ndarray

    @property
    def e(self) -> np.ndarray:
        return self.a_d - self.a

    @property
    def e_dot(self) -> np.ndarray:
        return self.a_d_rate - self.a_rate


def track_abstract(swarm: SwarmState, ref: TorqueReference, gains: SwarmGains,
                   manifold: ManifoldSpec = ManifoldSpec(), dt: float = 1e-4,
                   duration: float = 1.0, half_length: float = 0.5) -> HarnessLog:
    n = swarm.n
    is_di, m, c = swarm.is_di, swarm.masses, swarm.dampings

    def inputs(t, x):
        s = SwarmState(is_di, m, c, x[:n], x[n:])
        return swarm_inputs(s, ref(t, manifold), gains, half_length)

    def f(t, x):
        u, _ = inputs(t, x)
        v = x[n:]
        dx = np.empty_like(x)
        dx[:n] = np.where(is_di, v, u)
        dx[n:] = np.where(is_di, (u - c * v) / m, 0.0)
        return dx

    n_steps = int(round(duration / dt))
    x = np.concatenate([swarm.positions, swarm.velocities]).astype(float)
    t_out = np.arange(n_steps + 1) * dt
    a = np.empty((n_steps + 1, 2))
    ar = np.empty_like(a)
    ad = np.empty_like(a)
    adr = np.empty_like(a)
    ada = np.empty_like(a)
    for k, t in enumerate(t_out):
        _, v_eff = inputs(t, x)
        x[n:] = v_eff
        p = x[:n]
        des = ref(t, manifold)
        a[k] = (np.sum(m * p), np.sum(m * p * p))
        ar[k] = (np.sum(m * v_eff), np.sum(2.0 * m * p * v_eff))
        ad[k], adr[k], ada[k] = des.vector, des.rate, des.accel
        if k < n_steps:
            x = rk4_step(f, t, x, dt)
    return HarnessLog(t_out, a, ar, ad, adr, ada)


def decay_rates(log: HarnessLog, floor: float = 1e-10) -> np.ndarray:
    """Least-squares slope of -log|e| per channel, using samples with |e| > floor."""
    out = np.empty(2)
    for j in range(2):
        e = np.abs(log.e[:, j])
        keep = e > floor
        if keep.sum() < 3:
            out[j] = math.nan
            continue
        out[j] = -np.polyfit(log.t[keep], np.log(e[keep]), 1)[0]
    return out


def second_order_residual(log: HarnessLog, gains: SwarmGains, t_min: float = 0.0) -> tuple[float, float]:
    """Max residual of a_ddot - K_p e - K_d e_dot - a_d_ddot, with a_ddot from central differences.

    Returns (max residual norm, max |a_d_ddot| norm) over the window t >= t_min.
    """
    dt = log.t[1] - log.t[0]
    a_dd = (log.a[2:] - 2.0 * log.a[1:-1] + log.a[:-2]) / dt**2
    sl = slice(1, -1)
    target = (np.asarray(gains.K_p) * log.e[sl] + np.asarray(gains.K_d) * log.e_dot[sl]
              + log.a_d_accel[sl])
    res = np.linalg.norm(a_dd - target, axis=1)
    w = log.t[sl] >= t_min
    return float(res[w].max()), float(np.linalg.norm(log.a_d_accel[sl][w], axis=1).max())
