"""Scenario execution, run logs, metrics and sweeps."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import lyapunov as lyap
from ..errors import (ConstraintBreach, NonFiniteState, NonPositiveInertia, SecantDomain,
                      SingularSwarm)
from .config import GeneratorSpec, ScenarioConfig, config_from_dict
from .engine import run_problem
from .problem import (ARISE, BREACH, INERTIA, NONFINITE, OK, SECANT, SINGULAR, STATUS_NAMES,
                      Problem, build_problem)

_ERRORS = {NONFINITE: NonFiniteState, BREACH: ConstraintBreach, SINGULAR: SingularSwarm,
           SECANT: SecantDomain, INERTIA: NonPositiveInertia}


@dataclass
class RunLog:
    columns: list
    data: np.ndarray
    n_members: int

    def __len__(self):
        return self.data.shape[0]

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.col("t")

    @property
    def positions(self) -> np.ndarray:
        i = self.columns.index("p_0")
        return self.data[:, i:i + self.n_members]

    @property
    def velocities(self) -> np.ndarray:
        i = self.columns.index("v_0")
        return self.data[:, i:i + self.n_members]

    @property
    def lambda_hat(self) -> np.ndarray:
        i = self.columns.index("lambda_1")
        return self.data[:, i:i + 4]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.data:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "RunLog":
        with open(path) as fh:
            cols = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n = sum(c.startswith("p_") for c in cols)
        return cls(cols, data, n)


@dataclass
class Metrics:
    name: str
    n_members: int
    status: str
    engine: str
    wall_time: float
    settling_time: Optional[float]
    rms_tracking: float
    max_abs_theta: float
    max_abs_p: float
    max_displacement: float
    max_abs_e_tau: float
    max_abs_e_J: float
    final_abs_e_tau: float
    final_abs_e_J: float
    violations: int
    lambda_final: list
    lambda_max_abs: float
    t_end: float
    t_fail: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: (lyap.safe_float(v) if isinstance(v, float) else v) for k, v in asdict(self).items()}

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class RunResult:
    log: RunLog
    metrics: Metrics
    status: int
    t_fail: float
    problem: Problem = field(repr=False)
    di_eps: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == OK


def fill_lyapunov(log: RunLog, prob: Problem) -> Optional[float]:
    """Write V_p and V_a columns in place. Returns the eps used for the DI form (or None)."""
    d = log.data
    if len(log) == 0:
        return None
    th, om, Js = log.col("theta"), log.col("omega"), log.col("J_s")
    e = np.stack([log.col("e_tau"), log.col("e_J")], axis=1)
    ed = np.stack([log.col("edot_tau"), log.col("edot_J")], axis=1)
    J = prob.params.J
    if prob.mode == ARISE:
        a = prob.arise
        t = log.t
        der = np.array([prob.traj.derivatives(tt) for tt in t])
        e1 = der[:, 0] - th
        e1d = der[:, 1] - om
        e2 = e1d + a.alpha1 * e1
        r = der[:, 2] - log.col("theta_ddot") + a.alpha1 * e1d + a.alpha2 * e2
        lam_err = prob.params.true_lambda[None, :] - log.lambda_hat
        Vp = lyap.v_parent_arise(e1, e2, r, J, Js, lam_err, a.Gamma_matrix)
    else:
        Vp = lyap.v_parent_pd(th, om, J, Js)
    eps = None
    if np.any(prob.swarm0.is_di):
        eps = lyap.di_epsilon(prob.gains.K_p, prob.gains.K_d)
        Va = lyap.v_abstract_di(e, ed, prob.gains.K_p, eps if eps is not None else 0.0)
    else:
        Va = lyap.v_abstract_si(e)
    d[:, log.columns.index("V_p")] = Vp
    d[:, log.columns.index("V_a")] = Va
    return eps


def compute_metrics(log: RunLog, prob: Problem, name: str, status: int, engine: str,
                    wall: float, t_fail: float, settle_tol: float) -> Metrics:
    t = log.t
    err = log.col("theta_d") - log.col("theta")
    outside = np.flatnonzero(np.abs(err) >= settle_tol)
    if len(t) == 0:
        settle = None
    elif outside.size == 0:
        settle = float(t[0])
    elif outside[-1] + 1 < len(t):
        settle = float(t[outside[-1] + 1])
    else:
        settle = None
    half = t >= 0.5 * t[-1] if len(t) else np.zeros(0, bool)
    rms = float(np.sqrt(np.mean(err[half] ** 2))) if np.any(half) else math.nan
    P = log.positions
    lam = log.lambda_hat
    viol = int(np.sum((log.col("flag_theta") > 0) | (log.col("flag_p") > 0)))
    return Metrics(
        name=name, n_members=prob.n, status=STATUS_NAMES[status], engine=engine, wall_time=wall,
        settling_time=settle, rms_tracking=rms,
        max_abs_theta=float(np.max(np.abs(log.col("theta")))),
        max_abs_p=float(np.max(np.abs(P))),
        max_displacement=float(np.max(np.abs(P - prob.swarm0.positions[None, :]))),
        max_abs_e_tau=float(np.max(np.abs(log.col("e_tau")))),
        max_abs_e_J=float(np.max(np.abs(log.col("e_J")))),
        final_abs_e_tau=float(abs(log.col("e_tau")[-1])),
        final_abs_e_J=float(abs(log.col("e_J")[-1])),
        violations=viol,
        lambda_final=[float(x) for x in lam[-1]],
        lambda_max_abs=float(np.max(np.abs(lam))),
        t_end=float(t[-1]),
        t_fail=None if status == OK else float(t_fail),
    )


def run_scenario(cfg: ScenarioConfig, engine: Optional[str] = None,
                 raise_on_error: bool = True) -> RunResult:
    prob = build_problem(cfg)
    t0 = time.perf_counter()
    data, status, t_fail, used = run_problem(prob, engine)
    wall = time.perf_counter() - t0
    log = RunLog(prob.columns, np.array(data), prob.n)
    if status != OK and raise_on_error:
        raise _ERRORS[status](f"{cfg.name}: {STATUS_NAMES[status]} at t = {t_fail:.4f}", t_fail)
    eps = fill_lyapunov(log, prob)
    metrics = compute_metrics(log, prob, cfg.name, status, used, wall, t_fail,
                              cfg.integration.settle_tol)
    return RunResult(log, metrics, status, t_fail, prob, eps)


# --------------------------------------------------------------------------- sweeps

AXES = ("size", "seed", "gain")


def _variant(cfg: ScenarioConfig, axis: str, value, gain_key: Optional[str]) -> ScenarioConfig:
    if axis == "size":
        n = int(value)
        if not isinstance(cfg.swarm, GeneratorSpec) and len(cfg.swarm.masses) == n:
            return cfg
        base = cfg.swarm if isinstance(cfg.swarm, GeneratorSpec) else GeneratorSpec(n=n, seed=cfg.seed)
        d = cfg.to_dict()
        d["swarm"] = {"generator": {**asdict(base), "n": n}}
        out = config_from_dict(d)
        out.name = f"{cfg.name}[n={n}]"
        return out
    if axis == "seed":
        over = {"seed": int(value)}
        if isinstance(cfg.swarm, GeneratorSpec):
            over["swarm.generator.seed"] = int(value)
        out = cfg.with_overrides(over)
        out.name = f"{cfg.name}[seed={value}]"
        return out
    if axis == "gain":
        if not gain_key:
            raise ValueError("gain sweeps need a dotted gain key")
        out = cfg.with_overrides({gain_key: value})
        out.name = f"{cfg.name}[{gain_key}={value}]"
        return out
    raise ValueError(f"axis must be one of {AXES}")


def sweep(cfg: ScenarioConfig, axis: str, values, gain_key: Optional[str] = None,
          threads: int = 1, engine: Optional[str] = None) -> list[dict]:
    """One metrics row per value. Per-run errors are recorded in the row, not raised."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")

    def one(v):
        row = {"axis": axis, "value": v}
        try:
            res = run_scenario(_variant(cfg, axis, v, gain_key), engine, raise_on_error=False)
            row.update(res.metrics.to_dict())
            row["error"] = None if res.ok else res.metrics.status
        except Exception as exc:  # collected, never fatal to the sweep
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    if threads <= 1:
        return [one(v) for v in values]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, values))
