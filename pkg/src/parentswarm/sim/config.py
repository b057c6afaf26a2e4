"""Scenario configuration: JSON <-> dataclasses, with dotted-key overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from ..control import ARISEGains, ManifoldSpec, PDGains, SwarmGains, TrajectorySpec
from ..errors import ConfigError
from ..plant import DI, SI, Disturbance, PhysicalParams, SwarmState

SCHEMA = "parentswarm/scenario@1"
REFERENCE_MASSES = [0.3552, 0.3532, 0.6762, 0.4596]
REFERENCE_DAMPINGS = [0.7290, 1.4133, 0.6524, 1.3258]
REFERENCE_POSITIONS = [0.125, -0.125, 0.125, -0.125]


@dataclass
class RosterSpec:
    kinds: list
    masses: list
    dampings: list
    positions: list
    velocities: Optional[list] = None

    def build(self) -> SwarmState:
        n = len(self.masses)
        if n == 0:
            raise ConfigError("swarm roster is empty", "swarm.roster.masses")
        for key in ("kinds", "dampings", "positions"):
            if len(getattr(self, key)) != n:
                raise ConfigError(f"swarm.roster.{key} has {len(getattr(self, key))} entries, "
                                  f"expected {n}", f"swarm.roster.{key}")
        vel = self.velocities if self.velocities is not None else [0.0] * n
        if len(vel) != n:
            raise ConfigError("swarm.roster.velocities length mismatch", "swarm.roster.velocities")
        bad = [k for k in self.kinds if k not in (SI, DI)]
        if bad:
            raise ConfigError(f"unknown member kind {bad[0]!r}", "swarm.roster.kinds")
        return SwarmState(
            is_di=[k == DI for k in self.kinds], masses=self.masses, dampings=self.dampings,
            positions=self.positions, velocities=vel,
        )


@dataclass
class GeneratorSpec:
    """Seeded random swarm: uniform masses/dampings, alternating +/- positions.

    Positions have equal magnitude chosen so the initial swarm inertia equals
    `J_s0`. `composition` is SI, DI or hetero (first half SI, second half DI).
    """

    n: int
    composition: str = "hetero"
    seed: int = 0
    mass_range: tuple = (0.25, 0.75)
    damping_range: tuple = (0.5, 1.5)
    J_s0: float = 0.0288

    def build(self) -> SwarmState:
        if self.n < 1:
            raise ConfigError("generator needs n >= 1", "swarm.generator.n")
        if self.composition not in (SI, DI, "hetero"):
            raise ConfigError(f"unknown composition {self.composition!r}", "swarm.generator.composition")
        rng = np.random.default_rng(self.seed)
        m = rng.uniform(*self.mass_range, size=self.n)
        c = rng.uniform(*self.damping_range, size=self.n)
        mag = np.sqrt(self.J_s0 / m.sum())
        p = mag * np.where(np.arange(self.n) % 2 == 0, 1.0, -1.0)
        if self.composition == SI:
            is_di = np.zeros(self.n, bool)
        elif self.composition == DI:
            is_di = np.ones(self.n, bool)
        else:
            is_di = np.arange(self.n) >= self.n // 2
        return SwarmState(is_di=is_di, masses=m, dampings=c, positions=p)


@dataclass
class IntegrationSpec:
    dt: float = 1e-3
    duration: float = 15.0
    decimation: int = 10
    hard_stop: bool = False
    settle_tol: float = 0.005
    filter_steps: float = 10.0

    def validate(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive", "integration.dt")
        if not self.duration >= self.dt:
            raise ConfigError("duration must be at least dt", "integration.duration")
        if int(self.decimation) < 1:
            raise ConfigError("decimation must be >= 1", "integration.decimation")
        if not self.filter_steps > 0:
            raise ConfigError("filter_steps must be positive", "integration.filter_steps")


@dataclass
class ScenarioConfig:
    name: str
    params: PhysicalParams
    swarm: Any  # RosterSpec | GeneratorSpec
    controller: str  # "PD" | "ARISE"
    pd: Optional[PDGains]
    arise: Optional[ARISEGains]
    swarm_gains: SwarmGains
    manifold: ManifoldSpec
    trajectory: TrajectorySpec
    disturbance: Disturbance
    theta0: float = 0.0
    omega0: float = 0.0
    integration: IntegrationSpec = field(default_factory=IntegrationSpec)
    seed: int = 0
    lqr: Optional[dict] = None
    stability: dict = field(default_factory=dict)
    atlas: Optional[dict] = None

    def build_swarm(self) -> SwarmState:
        try:
            s = self.swarm.build()
        except ValueError as exc:
            raise ConfigError(f"swarm: {exc}", "swarm") from exc
        if np.any(np.abs(s.positions) > self.params.half_length):
            raise ConfigError("initial positions lie outside the plane", "swarm")
        return s

    def to_dict(self) -> dict:
        return config_to_dict(self)

    def with_overrides(self, overrides: dict) -> "ScenarioConfig":
        d = config_to_dict(self)
        apply_overrides(d, overrides)
        return config_from_dict(d)


# --------------------------------------------------------------------------- parsing

def _section(d: dict, key: str, required=True) -> Optional[dict]:
    if key not in d:
        if required:
            raise ConfigError(f"missing key {key!r}", key)
        return None
    val = d[key]
    if not isinstance(val, dict):
        raise ConfigError(f"{key!r} must be an object", key)
    return val


def _build(cls, d: dict, prefix: str):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key {prefix}.{k}", f"{prefix}.{k}")
    kwargs = {k: tuple(v) if isinstance(v, list) and k not in ("kinds", "masses", "dampings",
                                                                 "positions", "velocities") else v
              for k, v in d.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        missing = [f.name for f in fields(cls) if f.name not in d
                   and f.default is MISSING and f.default_factory is MISSING]
        key = f"{prefix}.{missing[0]}" if missing else prefix
        raise ConfigError(f"{prefix}: {exc}", key) from exc
    except ValueError as exc:
        raise ConfigError(f"{prefix}: {exc}", prefix) from exc


def _require(d: dict, keys, prefix):
    for k in keys:
        if k not in d:
            raise ConfigError(f"missing key {prefix}.{k}", f"{prefix}.{k}")


def config_from_dict(d: dict) -> ScenarioConfig:
    if not isinstance(d, dict):
        raise ConfigError("config root must be an object")
    if d.get("schema") != SCHEMA:
        raise ConfigError(f"schema must be {SCHEMA!r}, got {d.get('schema')!r}", "schema")
    params = _build(PhysicalParams, _section(d, "params", False) or {}, "params")

    sw = _section(d, "swarm")
    if "roster" in sw:
        r = sw["roster"]
        _require(r, ("kinds", "masses", "dampings", "positions"), "swarm.roster")
        swarm = _build(RosterSpec, r, "swarm.roster")
    elif "generator" in sw:
        g = sw["generator"]
        _require(g, ("n",), "swarm.generator")
        swarm = _build(GeneratorSpec, g, "swarm.generator")
    else:
        raise ConfigError("swarm needs a 'roster' or 'generator'", "swarm.roster")

    ctl = _section(d, "controller")
    _require(ctl, ("type",), "controller")
    kind = ctl["type"]
    pd = arise = None
    body = {k: v for k, v in ctl.items() if k != "type"}
    if kind == "PD":
        _require(body, ("k1", "k2"), "controller")
        pd = _build(PDGains, body, "controller")
    elif kind == "ARISE":
        arise = _build(ARISEGains, body, "controller")
    else:
        raise ConfigError(f"controller.type must be PD or ARISE, got {kind!r}", "controller.type")

    man = dict(_section(d, "manifold", False) or {})
    if "tau_max" in man:
        raise ConfigError("manifold.tau_max is taken from params.tau_max", "manifold.tau_max")
    manifold = _build(ManifoldSpec, {**man, "tau_max": params.tau_max}, "manifold")

    cfg = ScenarioConfig(
        name=str(d.get("name", "scenario")),
        params=params,
        swarm=swarm,
        controller=kind,
        pd=pd,
        arise=arise,
        swarm_gains=_build(SwarmGains, _section(d, "swarm_gains", False) or {}, "swarm_gains"),
        manifold=manifold,
        trajectory=_build(TrajectorySpec, _section(d, "trajectory", False) or {}, "trajectory"),
        disturbance=_build(Disturbance, _section(d, "disturbance", False) or {}, "disturbance"),
        theta0=float(d.get("initial", {}).get("theta", 0.0)),
        omega0=float(d.get("initial", {}).get("omega", 0.0)),
        integration=_build(IntegrationSpec, _section(d, "integration", False) or {}, "integration"),
        seed=int(d.get("seed", 0)),
        lqr=d.get("lqr"),
        stability=dict(d.get("stability", {})),
        atlas=d.get("atlas"),
    )
    cfg.integration.validate()
    unknown = set(d) - {"schema", "name", "params", "swarm", "controller", "manifold", "swarm_gains",
                        "trajectory", "disturbance", "initial", "integration", "seed", "lqr",
                        "stability", "atlas"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key {k!r}", k)
    return cfg


def _plain(obj):
    if isinstance(obj, tuple):
        return [_plain(v) for v in obj]
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def config_to_dict(cfg: ScenarioConfig) -> dict:
    d: dict = {"schema": SCHEMA, "name": cfg.name, "params": asdict(cfg.params)}
    if isinstance(cfg.swarm, RosterSpec):
        d["swarm"] = {"roster": {k: v for k, v in asdict(cfg.swarm).items() if v is not None}}
    else:
        d["swarm"] = {"generator": asdict(cfg.swarm)}
    if cfg.controller == "PD":
        d["controller"] = {"type": "PD", **{k: v for k, v in asdict(cfg.pd).items() if v is not None}}
    else:
        d["controller"] = {"type": "ARISE", **asdict(cfg.arise)}
    man = asdict(cfg.manifold)
    man.pop("tau_max")
    d["manifold"] = man
    d["swarm_gains"] = asdict(cfg.swarm_gains)
    d["trajectory"] = asdict(cfg.trajectory)
    d["disturbance"] = asdict(cfg.disturbance)
    d["initial"] = {"theta": cfg.theta0, "omega": cfg.omega0}
    d["integration"] = asdict(cfg.integration)
    d["seed"] = cfg.seed
    if cfg.lqr is not None:
        d["lqr"] = cfg.lqr
    if cfg.stability:
        d["stability"] = cfg.stability
    if cfg.atlas is not None:
        d["atlas"] = cfg.atlas
    return _plain(d)


def parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d: dict, overrides) -> dict:
    """Set dotted keys in-place. `overrides` is a dict or an iterable of 'k=v' strings."""
    if not isinstance(overrides, dict):
        pairs = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value", item)
            k, v = item.split("=", 1)
            pairs[k.strip()] = parse_value(v)
        overrides = pairs
    for key, val in overrides.items():
        parts = key.split(".")
        node = d
        for p in parts[:-1]:
            nxt = node.get(p) if isinstance(node, dict) else None
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError(f"cannot descend into {p!r} for override {key!r}", key)
            node = nxt
        node[parts[-1]] = copy.deepcopy(val)
    return d


def load_config(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found", "config")
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}", "json") from exc
    if overrides:
        apply_overrides(d, overrides)
    return config_from_dict(d)


def save_config(cfg: ScenarioConfig, path):
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def bundled_config_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "configs"


def bundled_config(name: str, overrides=None) -> ScenarioConfig:
    if not name.endswith(".json"):
        name += ".json"
    return load_config(bundled_config_dir() / name, overrides)
