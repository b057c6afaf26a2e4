"""Lyapunov candidate functions and the DI epsilon witness search."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

DI_EPS_GRID = 10_000


def di_conditions(eps: float, kp: float, kd: float) -> np.ndarray:
    """Margins of the four DI gain inequalities for one diagonal pair (all must be > 0)."""
    return np.array([
        eps * kp + kd - eps,
        eps * kp * kd - eps**2 * kp - 0.25 * eps * kd**2,
        kp + 1.0,
        kp - eps**2,
    ])


def di_epsilon(K_p: Sequence[float], K_d: Sequence[float], n_grid: int = DI_EPS_GRID) -> Optional[float]:
    """Grid search over eps in (0, min sqrt(kp)) for the eps maximizing the worst margin.

    Returns None when no grid point satisfies every inequality.
    """
    kp = np.asarray(K_p, float)
    kd = np.asarray(K_d, float)
    if np.any(kp <= 0):
        return None
    hi = float(np.min(np.sqrt(kp)))
    eps = np.linspace(0.0, hi, n_grid + 2)[1:-1]
    worst = np.full(eps.shape, np.inf)
    for a, b in zip(kp, kd):
        m = np.stack([
            eps * a + b - eps,
            eps * a * b - eps**2 * a - 0.25 * eps * b**2,
            np.full_like(eps, a + 1.0),
            a - eps**2,
        ])
        worst = np.minimum(worst, m.min(axis=0))
    ok = worst > 0
    if not np.any(ok):
        return None
    return float(eps[np.argmax(np.where(ok, worst, -np.inf))])


def v_parent_pd(theta, omega, J, J_s):
    return 0.5 * theta**2 + 0.5 * (J + J_s) * omega**2


def v_abstract_si(e):
    e = np.asarray(e)
    return 0.5 * np.sum(e * e, axis=-1)


def v_abstract_di(e, e_dot, K_p, eps):
    e, e_dot = np.asarray(e), np.asarray(e_dot)
    kp = np.asarray(K_p, float)
    return 0.5 * (np.sum(kp * e * e, axis=-1) + 2.0 * eps * np.sum(e * e_dot, axis=-1)
                  + np.sum(e_dot * e_dot, axis=-1))


def v_parent_arise(e1, e2, r, J, J_s, lam_err, Gamma):
    Ginv = np.linalg.inv(np.asarray(Gamma, float))
    lam_err = np.atleast_2d(lam_err)
    quad = np.einsum("ij,jk,ik->i", lam_err, Ginv, lam_err)
    out = e1**2 + 0.5 * e2**2 + 0.5 * (J + J_s) * r**2 + 0.5 * quad
    return out if np.ndim(e1) else float(out[0])


def pd_region_radius2(theta_max: float, J: float, J_sd_max: float, floor: float = 1.0) -> float:
    """Squared-norm radius theta_max^2 / (2 eta), eta = max{floor, (J + J_sd_max)/2}."""
    eta = max(floor, 0.5 * (J + J_sd_max))
    return theta_max**2 / (2.0 * eta)


def safe_float(x):
    x = float(x)
    return x if math.isfinite(x) else None
