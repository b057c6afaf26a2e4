"""Parent controllers, the desired-abstract manifold and per-member swarm laws.

Sign conventions
----------------
The plane obeys ``(J + J_s) theta_dd = -cos(theta) g M1 - ...``, so a positive
desired torque ``tau_sd = g M1_d`` pushes the plane toward negative angles.
PD gains are therefore positive: ``tau_sd = k1 theta + k2 omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_continuous_are

from .abstraction import AbstractState, AuxAbstractState, check_regular, damping_compensation, s_sums
from .errors import RiccatiFailure, SecantDomain
from .plant import ParentState, PhysicalParams, SwarmMember, SwarmState

RICCATI_TOL = 1e-10


# --------------------------------------------------------------------------- manifold

@dataclass(frozen=True)
class ManifoldSpec:
    """J_sd = quad * tau^2 + offset, restricted to |tau| <= tau_max."""

    quad: float = 0.0125
    offset: float = 0.025
    tau_max: float = 5.0

    def __post_init__(self):
        if self.quad < 0:
            raise ValueError("manifold curvature must be nonnegative")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")

    def clamp(self, tau: float) -> float:
        return min(max(tau, -self.tau_max), self.tau_max)

    def J_sd(self, tau):
        return self.quad * tau * tau + self.offset

    def dJ_dtau(self, tau):
        return 2.0 * self.quad * tau

    @property
    def d2J_dtau2(self) -> float:
        return 2.0 * self.quad

    @property
    def J_sd_min(self) -> float:
        return self.offset

    @property
    def J_sd_max(self) -> float:
        return self.J_sd(self.tau_max)

    @property
    def slope_max(self) -> float:
        """max |dJ_sd/dtau| over the admissible torque range."""
        return abs(self.dJ_dtau(self.tau_max))


@dataclass(frozen=True)
class DesiredAbstract:
    """Desired abstract state (mass-moment units) with its first two rates."""

    M1: float
    J_s: float
    M1_dot: float = 0.0
    Jdot_s: float = 0.0
    M1_ddot: float = 0.0
    Jddot_s: float = 0.0
    tau: float = 0.0
    tau_dot: float = 0.0
    saturated: bool = False

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.M1, self.J_s])

    @property
    def rate(self) -> np.ndarray:
        return np.array([self.M1_dot, self.Jdot_s])

    @property
    def accel(self) -> np.ndarray:
        return np.array([self.M1_ddot, self.Jddot_s])


def desired_from_torque(tau: float, tau_dot: float, manifold: ManifoldSpec, g: float,
                        tau_ddot: float = 0.0, saturated: bool = False) -> DesiredAbstract:
    """Map a (clamped) desired torque and its rates onto the manifold."""
    if saturated:
        tau_dot = tau_ddot = 0.0
    dJ = manifold.dJ_dtau(tau)
    return DesiredAbstract(
        M1=tau / g,
        J_s=manifold.J_sd(tau),
        M1_dot=tau_dot / g,
        Jdot_s=dJ * tau_dot,
        M1_ddot=tau_ddot / g,
        Jddot_s=dJ * tau_ddot + manifold.d2J_dtau2 * tau_dot * tau_dot,
        tau=tau,
        tau_dot=tau_dot,
        saturated=saturated,
    )


# --------------------------------------------------------------------------- PD / LQR

@dataclass(frozen=True)
class PDGains:
    k1: float
    k2: float
    Q: Optional[tuple] = None
    R: Optional[float] = None

    @property
    def K(self) -> np.ndarray:
        return np.array([self.k1, self.k2])


def linearized_plant(params: PhysicalParams, J_sd0: float, damping_sign: float = -1.0):
    """(A, B) of the plane about the origin with J_s frozen and friction ~ gamma6 * omega.

    ``damping_sign=-1`` is the physical linearization; ``+1`` reproduces the
    sign printed alongside the reported LQR gains.
    """
    inertia = params.J + J_sd0
    A = np.array([[0.0, 1.0], [0.0, damping_sign * params.gamma6 / inertia]])
    B = np.array([[0.0], [-1.0 / inertia]])
    return A, B


def lqr_design(params: PhysicalParams, J_sd0: float, Q, R: float,
               damping_sign: float = -1.0) -> PDGains:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape != (2, 2) or not np.allclose(Q, Q.T) or np.any(np.linalg.eigvalsh(Q) <= 0):
        raise ValueError("Q must be 2x2 symmetric positive definite")
    if not R > 0:
        raise ValueError("R must be positive")
    A, B = linearized_plant(params, J_sd0, damping_sign)
    ctrb = np.hstack([B, A @ B])
    if np.linalg.matrix_rank(ctrb) < 2:
        raise RiccatiFailure("linearized plane is not controllable")
    Rm = np.array([[float(R)]])
    try:
        P = solve_continuous_are(A, B, Q, Rm)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise RiccatiFailure(f"Riccati solve failed: {exc}") from exc
    resid = A.T @ P + P @ A - P @ B @ np.linalg.solve(Rm, B.T @ P) + Q
    if not np.all(np.isfinite(P)) or np.max(np.abs(resid)) > RICCATI_TOL * max(1.0, np.max(np.abs(Q))):
        raise RiccatiFailure(f"Riccati residual {np.max(np.abs(resid)):.2e} too large")
    K = np.linalg.solve(Rm, B.T @ P).ravel()
    # u = -K x is the LQR input; the plant input is tau_sd itself
    k1, k2 = -K
    return PDGains(float(k1), float(k2), Q=tuple(map(tuple, Q.tolist())), R=float(R))


def pd_torque(x_p: ParentState, gains: PDGains, manifold: ManifoldSpec) -> tuple[float, bool]:
    raw = gains.k1 * x_p.theta + gains.k2 * x_p.omega
    tau = manifold.clamp(raw)
    return tau, tau != raw


def pd_parent_control(x_p: ParentState, gains: PDGains, manifold: ManifoldSpec,
                      g: float = 9.81, theta_ddot: float = 0.0,
                      saturated: Optional[bool] = None) -> DesiredAbstract:
    """Desired abstract state under the PD law.

    `theta_ddot` is needed for the torque rate; pass the plant acceleration.
    `saturated` overrides the clamp status (the simulator freezes it per step).
    """
    tau, sat = pd_torque(x_p, gains, manifold)
    if saturated is not None:
        sat = saturated
    tau_dot = gains.k1 * x_p.omega + gains.k2 * theta_ddot
    return desired_from_torque(tau, tau_dot, manifold, g, saturated=sat)


# --------------------------------------------------------------------------- ARISE

@dataclass(frozen=True)
class TrajectorySpec:
    """theta_d(t) = amplitude * sin(frequency * t)."""

    amplitude: float = 0.0
    frequency: float = 0.0

    def derivatives(self, t: float) -> np.ndarray:
        """(theta_d, d1, d2, d3, d4) at time t."""
        a, w = self.amplitude, self.frequency
        s, c = math.sin(w * t), math.cos(w * t)
        return np.array([a * s, a * w * c, -a * w**2 * s, -a * w**3 * c, a * w**4 * s])

    def bounds(self) -> np.ndarray:
        """Sup-norms of theta_d and its first four derivatives."""
        return abs(self.amplitude) * np.abs(self.frequency) ** np.arange(5)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.frequency if self.frequency else math.inf


def _sech2(x):
    return 1.0 / np.cosh(x) ** 2


def regressor(d: Sequence[float], gbar: Sequence[float]) -> np.ndarray:
    """Y_d for trajectory derivatives d = (theta_d, d1, d2, ...), gbar = (g2, g3, g5)."""
    a, b, c = gbar
    w, acc = d[1], d[2]
    return np.array([acc, math.tanh(a * w) - math.tanh(b * w), math.tanh(c * w), w])


def regressor_dot(d: Sequence[float], gbar: Sequence[float]) -> np.ndarray:
    a, b, c = gbar
    w, acc, jerk = d[1], d[2], d[3]
    return np.array([
        jerk,
        (a * _sech2(a * w) - b * _sech2(b * w)) * acc,
        c * _sech2(c * w) * acc,
        acc,
    ])


def regressor_ddot(d: Sequence[float], gbar: Sequence[float]) -> np.ndarray:
    a, b, c = gbar
    w, acc, jerk, snap = d[1], d[2], d[3], d[4]

    def h(k):
        # d/dt [k sech^2(k w) acc]
        return k * _sech2(k * w) * (jerk - 2.0 * k * math.tanh(k * w) * acc * acc)

    return np.array([snap, h(a) - h(b), h(c), jerk])


@dataclass(frozen=True)
class ARISEGains:
    alpha1: float = 1.0
    alpha2: float = 2.0
    k_s: float = 1.0
    beta: float = 0.5
    Gamma: tuple = (10.0, 1.0, 1.0, 10.0)
    gbar2: float = 1000.0
    gbar3: float = 700.0
    gbar5: float = 1000.0
    lambda0: tuple = (0.4566, 0.009, 0.01, 0.9)
    sgn_half_width: float = 0.0

    def __post_init__(self):
        G = self.Gamma_matrix
        if not np.allclose(G, G.T):
            raise ValueError("Gamma must be symmetric")
        if np.any(np.linalg.eigvalsh(G) <= 0):
            raise ValueError("Gamma must be positive definite")
        if len(self.lambda0) != 4:
            raise ValueError("lambda0 needs 4 entries")

    @property
    def Gamma_matrix(self) -> np.ndarray:
        G = np.asarray(self.Gamma, dtype=float)
        return np.diag(G) if G.ndim == 1 else G

    @property
    def gbar(self) -> tuple[float, float, float]:
        return (self.gbar2, self.gbar3, self.gbar5)


@dataclass
class ARISEState:
    mu1: float = 0.0
    mu2: np.ndarray = field(default_factory=lambda: np.zeros(4))
    lambda_hat: np.ndarray = field(default_factory=lambda: np.zeros(4))
    e2_0: float = 0.0
    boundary0: np.ndarray = field(default_factory=lambda: np.zeros(4))


def arise_errors(x_p: ParentState, d: np.ndarray, alpha1: float) -> tuple[float, float, float]:
    """(e1, e1_dot, e2)."""
    e1 = d[0] - x_p.theta
    e1_dot = d[1] - x_p.omega
    return e1, e1_dot, e1_dot + alpha1 * e1


def sgn(x: float, half_width: float = 0.0) -> float:
    if half_width > 0:
        return max(-1.0, min(1.0, x / half_width))
    return float(np.sign(x))


@dataclass(frozen=True)
class ARISEOutput:
    """Everything one evaluation of the ARISE law produces."""

    desired: DesiredAbstract
    tau_raw: float
    mu1_dot: float
    mu2_dot: np.ndarray
    lambda_hat: np.ndarray
    e1: float
    e2: float


class ARISEController:
    """Integral-form ARISE law.

    lambda_hat is algebraic in the integral states: no acceleration measurement
    enters it. mu1 and mu2 are the only integrated controller states.
    """

    def __init__(self, gains: ARISEGains, traj: TrajectorySpec, manifold: ManifoldSpec,
                 g: float = 9.81):
        self.gains = gains
        self.traj = traj
        self.manifold = manifold
        self.g = g
        self._Gamma = gains.Gamma_matrix

    def initial_state(self, x_p: ParentState, t0: float = 0.0) -> ARISEState:
        d = self.traj.derivatives(t0)
        _, _, e2 = arise_errors(x_p, d, self.gains.alpha1)
        Ydot = regressor_dot(d, self.gains.gbar)
        return ARISEState(
            mu1=0.0, mu2=np.zeros(4),
            lambda_hat=np.asarray(self.gains.lambda0, dtype=float).copy(),
            e2_0=e2, boundary0=Ydot * e2,
        )

    def lambda_hat(self, st: ARISEState, Ydot: np.ndarray, e2: float) -> np.ndarray:
        return (np.asarray(self.gains.lambda0, dtype=float)
                + self._Gamma @ (Ydot * e2 - st.boundary0) - self._Gamma @ st.mu2)

    def evaluate(self, t: float, x_p: ParentState, st: ARISEState, theta_ddot: float = 0.0,
                 sign: Optional[float] = None, saturated: Optional[bool] = None) -> ARISEOutput:
        """Evaluate the law at (t, x_p) given the integral states in `st`.

        `theta_ddot` only enters the torque rate. `sign` and `saturated` allow the
        caller to hold the discontinuities fixed across an integration step.
        """
        gn = self.gains
        if abs(x_p.theta) >= math.pi / 2:
            raise SecantDomain(f"|theta| = {abs(x_p.theta):.4f} >= pi/2")
        d = self.traj.derivatives(t)
        e1, e1_dot, e2 = arise_errors(x_p, d, gn.alpha1)
        Y = regressor(d, gn.gbar)
        Yd = regressor_dot(d, gn.gbar)
        Ydd = regressor_ddot(d, gn.gbar)
        lam = self.lambda_hat(st, Yd, e2)
        ks1 = gn.k_s + 1.0
        if sign is None:
            sign = sgn(e2, gn.sgn_half_width)
        mu1_dot = ks1 * gn.alpha2 * e2 + gn.beta * sign
        mu2_dot = Ydd * e2 - gn.alpha2 * Yd * e2
        Q = Y @ lam + ks1 * (e2 - st.e2_0) + st.mu1
        cos_t = math.cos(x_p.theta)
        tau_raw = -Q / cos_t
        e2_dot = d[2] - theta_ddot + gn.alpha1 * e1_dot
        r = e2_dot + gn.alpha2 * e2
        Q_dot = Yd @ lam + Y @ (self._Gamma @ Yd) * r + ks1 * e2_dot + mu1_dot
        tau_dot = -(math.tan(x_p.theta) * x_p.omega * Q + Q_dot) / cos_t
        tau = self.manifold.clamp(tau_raw)
        sat = (tau != tau_raw) if saturated is None else saturated
        desired = desired_from_torque(tau, tau_dot, self.manifold, self.g, saturated=sat)
        return ARISEOutput(desired, tau_raw, mu1_dot, mu2_dot, lam, e1, e2)


def arise_parent_control(x_p: ParentState, traj: TrajectorySpec, st: ARISEState, gains: ARISEGains,
                         manifold: ManifoldSpec, t: float, dt: float, g: float = 9.81,
                         theta_ddot: float = 0.0) -> tuple[DesiredAbstract, ARISEState]:
    """One sampled-controller update: evaluate at t, then advance mu1, mu2 over dt (Euler)."""
    ctl = ARISEController(gains, traj, manifold, g)
    out = ctl.evaluate(t, x_p, st, theta_ddot)
    new = replace(st, mu1=st.mu1 + dt * out.mu1_dot, mu2=st.mu2 + dt * out.mu2_dot,
                  lambda_hat=out.lambda_hat)
    return out.desired, new


# --------------------------------------------------------------------------- swarm laws

@dataclass(frozen=True)
class SwarmGains:
    K: tuple = (10.0, 10.0)
    K_p: tuple = (10.0, 10.0)
    K_d: tuple = (5.0, 5.0)
    k_sd: float = 1.0

    def __post_init__(self):
        for name in ("K", "K_p", "K_d"):
            if any(not k > 0 for k in getattr(self, name)):
                raise ValueError(f"{name} must be positive diagonal")
        if not self.k_sd > 0:
            raise ValueError("k_sd must be positive")


def si_member_control(member: SwarmMember, a: AbstractState, aux: AuxAbstractState,
                      a_d: DesiredAbstract, K: Sequence[float], half_length: float = 0.5) -> float:
    check_regular(aux, half_length)
    e = a_d.vector - a.vector
    row = aux.pinv_row(member.mass, member.position)
    return float(row @ (np.asarray(K) * e + a_d.rate))


def di_member_control(member: SwarmMember, a: AbstractState, aux: AuxAbstractState,
                      a_d: DesiredAbstract, K_p: Sequence[float], K_d: Sequence[float],
                      k_sd: float, half_length: float = 0.5) -> float:
    """Force on one DI member.

    Uses the member's own state, the abstract state and its rate (a.M1_dot,
    a.Jdot_s), the auxiliary state (S sums, Ca, Phi_dot p_dot) and a_d.
    """
    check_regular(aux, half_length)
    if aux.Ca is None:
        raise ValueError("aux state lacks the damping compensation matrix")
    e = a_d.vector - a.vector
    e_dot = a_d.rate - a.rate
    phidot_pdot = np.array([0.0, aux.phidot_pdot])
    m = member.mass
    inner = np.asarray(K_p) * e + (np.diag(K_d) - aux.Ca) @ e_dot - phidot_pdot + a_d.accel
    row = aux.pinv_row(m, member.position)
    return float(row @ (m * inner + (member.damping + k_sd) * a_d.rate) - k_sd * member.velocity)


def swarm_inputs(s: SwarmState, a_d: DesiredAbstract, gains: SwarmGains,
                 half_length: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized swarm law for a mixed swarm.

    Returns (u, v_eff): inputs for every member and the effective velocities,
    where SI entries are replaced by their commanded input. DI members see the
    abstract rate produced by those effective velocities.
    """
    m, p = s.masses, s.positions
    S = s_sums(m, p)
    aux = AuxAbstractState(*S)
    check_regular(aux, half_length)
    rows = aux.pinv_row(m, p)
    a = np.array([np.sum(m * p), np.sum(m * p * p)])
    e = a_d.vector - a
    u = np.zeros(s.n)
    v = s.velocities.copy()
    si = ~s.is_di
    if np.any(si):
        u[si] = rows[si] @ (np.asarray(gains.K) * e + a_d.rate)
        v[si] = u[si]
    di = s.is_di
    if np.any(di):
        Ca = damping_compensation(s, S, gains.k_sd)
        a_rate = np.array([np.sum(m * v), np.sum(2.0 * m * p * v)])
        e_dot = a_d.rate - a_rate
        phidot_pdot = np.array([0.0, np.sum(2.0 * m * v * v)])
        base = (np.asarray(gains.K_p) * e + (np.diag(gains.K_d) - Ca) @ e_dot
                - phidot_pdot + a_d.accel)
        md, cd = m[di], s.dampings[di]
        u[di] = (rows[di] @ base) * md + (cd + gains.k_sd) * (rows[di] @ a_d.rate) - gains.k_sd * v[di]
    return u, v


def heterogeneous_control(s: SwarmState, a: AbstractState, aux: AuxAbstractState,
                          a_d: DesiredAbstract, gains: SwarmGains,
                          half_length: float = 0.5) -> np.ndarray:
    """Dispatch each member to its own law.

    When SI members are present the abstract rate seen by DI members is
    rebuilt with the SI commanded inputs as their velocities.
    """
    check_regular(aux, half_length)
    u = np.zeros(s.n)
    v = s.velocities.copy()
    for i in np.flatnonzero(~s.is_di):
        u[i] = si_member_control(s.member(i), a, aux, a_d, gains.K, half_length)
        v[i] = u[i]
    if np.any(s.is_di):
        m, p = s.masses, s.positions
        a_eff = replace(a, M1_dot=float(np.sum(m * v)), Jdot_s=float(np.sum(2.0 * m * p * v)))
        aux_eff = replace(aux, phidot_pdot=float(np.sum(2.0 * m * v * v)))
        if aux_eff.Ca is None:
            aux_eff = replace(aux_eff, Ca=damping_compensation(s, (aux.S0, aux.S1, aux.S2, aux.S3), gains.k_sd))
        for i in np.flatnonzero(s.is_di):
            u[i] = di_member_control(s.member(i), a_eff, aux_eff, a_d, gains.K_p, gains.K_d,
                                     gains.k_sd, half_length)
    return u
