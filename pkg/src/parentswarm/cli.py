"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime divergence,
4 stability pre-check failure under --strict-stability.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import atlas as atl
from . import stability
from .control import lqr_design
from .errors import (ConfigError, ConstraintBreach, EmptySwarm, NonFiniteState, NonPositiveInertia,
                     RiccatiFailure, SecantDomain, SingularSwarm)
from .sim.config import GeneratorSpec, ScenarioConfig, bundled_config_dir, load_config
from .sim.runner import AXES, run_scenario, sweep

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_STABILITY = 0, 2, 3, 4
RUNTIME_ERRORS = (NonFiniteState, ConstraintBreach, SingularSwarm, SecantDomain, NonPositiveInertia,
                  RiccatiFailure)
ATLAS_KEYS = {"n_M1", "n_J", "M1_range", "J_range", "budget", "samples_per_edge", "n_tau"}

log = logging.getLogger("parentswarm")


class StabilityRejected(Exception):
    pass


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    name = p.name if p.suffix == ".json" else p.name + ".json"
    bundled = bundled_config_dir() / name
    return bundled if bundled.exists() else p


def _load(args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(_resolve(args.config), overrides)
    if args.seed is not None and isinstance(cfg.swarm, GeneratorSpec):
        cfg = cfg.with_overrides({"swarm.generator.seed": int(args.seed)})
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


# --------------------------------------------------------------------------- subcommands

def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = _out(args)
    report = stability.audit(cfg)
    if args.strict_stability and not report.all_pass:
        report.to_json(out / "stability_report.json")
        raise StabilityRejected(f"pre-check failed: {', '.join(report.failed)}")
    res = run_scenario(cfg, raise_on_error=False)
    res.log.to_csv(out / "run.csv")
    res.metrics.to_json(out / "metrics.json")
    if res.ok:
        report = stability.audit(cfg, res.log, res.problem)
    report.to_json(out / "stability_report.json")
    m = res.metrics
    print(f"{cfg.name}: {m.status} in {m.wall_time:.3f} s ({m.engine}); "
          f"settling {m.settling_time}, rms {m.rms_tracking:.3g}, violations {m.violations}")
    if not res.ok:
        log.error("%s: %s at t = %.4f", cfg.name, m.status, res.t_fail)
        return EXIT_RUNTIME
    return EXIT_OK


def _atlas_opts(cfg: ScenarioConfig) -> dict:
    opts = dict(cfg.atlas or {})
    unknown = set(opts) - ATLAS_KEYS
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key atlas.{k}", f"atlas.{k}")
    return opts


def cmd_atlas(args) -> int:
    cfg = _load(args)
    opts = _atlas_opts(cfg)
    swarm = cfg.build_swarm()
    m, L = swarm.masses, cfg.params.L
    out = _out(args)
    Mr, Jr = atl.default_ranges(m, L)
    grid = atl.atlas_grid(m, L, opts.get("M1_range", Mr), opts.get("J_range", Jr),
                          int(opts.get("n_M1", 50)), int(opts.get("n_J", 50)),
                          int(opts.get("budget", atl.DEFAULT_BUDGET)), cfg.seed, args.threads)
    grid.to_csv(out / "atlas.csv")
    with open(out / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "M1", "J_s"])
        if m.size <= atl.MAX_EDGE_DIM:
            for k, poly in enumerate(atl.map_hypercube_edges(m, L, int(opts.get("samples_per_edge", 20)))):
                for M, J in poly:
                    w.writerow([k, repr(float(M)), repr(float(J))])
    cert = atl.certify_manifold(cfg.manifold, m, L, int(opts.get("n_tau", 101)), cfg.params.g,
                                int(opts.get("budget", atl.DEFAULT_BUDGET)), cfg.seed)
    _write_json(out / "manifold_cert.json", {"masses": m.tolist(), "L": L, **cert.to_dict()})
    print(f"atlas {grid.counts()}; manifold certificate "
          f"{'pass' if cert.passed else 'fail'} (certified |tau| <= {cert.certified_tau})")
    return EXIT_OK


def cmd_design_lqr(args) -> int:
    cfg = _load(args)
    spec = dict(cfg.lqr or {})
    unknown = set(spec) - {"Q", "R", "J_sd0", "damping_sign"}
    if unknown:
        k = sorted(unknown)[0]
        raise ConfigError(f"unknown key lqr.{k}", f"lqr.{k}")
    Q = np.asarray(spec.get("Q", [[10.0, 0.0], [0.0, 1.0]]), float)
    R = float(spec.get("R", 1.0))
    J0 = float(spec.get("J_sd0", cfg.manifold.offset))
    sign = float(spec.get("damping_sign", -1.0))
    try:
        gains = lqr_design(cfg.params, J0, Q, R, sign)
        other = lqr_design(cfg.params, J0, Q, R, -sign)
    except ValueError as exc:
        raise ConfigError(f"lqr: {exc}", "lqr") from exc
    out = _out(args)
    doc = {"k1": gains.k1, "k2": gains.k2, "magnitudes": [abs(gains.k1), abs(gains.k2)],
           "Q": Q.tolist(), "R": R, "J_sd0": J0, "damping_sign": sign,
           "opposite_sign": {"damping_sign": -sign, "k1": other.k1, "k2": other.k2}}
    _write_json(out / "lqr_gains.json", doc)
    print(f"K_pd = ({gains.k1:.4f}, {gains.k2:.4f}) with damping sign {sign:+g}; "
          f"opposite sign gives ({other.k1:.4f}, {other.k2:.4f})")
    return EXIT_OK


def cmd_check_stability(args) -> int:
    cfg = _load(args)
    report = stability.audit(cfg)
    out = _out(args)
    report.to_json(out / "stability_report.json")
    print(f"{cfg.name}: {'all conditions pass' if report.all_pass else 'failed: ' + ', '.join(report.failed)}")
    for d in report.discrepancies:
        print(f"  discrepancy {d['quantity']}: reference {d['reference']}, computed {d['computed']}")
    if args.strict_stability and not report.all_pass:
        return EXIT_STABILITY
    return EXIT_OK


def _parse_values(text: str) -> list:
    vals = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            vals.append(json.loads(item))
        except json.JSONDecodeError:
            vals.append(item)
    return vals


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("sweep needs at least one value", "values")
    if args.axis == "gain" and not args.gain_key:
        raise ConfigError("gain sweeps need --gain-key", "gain_key")
    rows = sweep(cfg, args.axis, values, args.gain_key, args.threads)
    out = _out(args)
    _write_json(out / "sweep.json", rows)
    keys = ["axis", "value", "n_members", "status", "rms_tracking", "settling_time",
            "max_displacement", "max_abs_theta", "violations", "wall_time", "error"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in keys})
    for r in rows:
        print(f"{args.axis}={r['value']}: {r.get('status', '-')} rms {r.get('rms_tracking')} "
              f"disp {r.get('max_displacement')} {r['error'] or ''}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parentswarm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario JSON (path or bundled name)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override")
        p.add_argument("--strict-stability", action="store_true")
        p.add_argument("--threads", type=int, default=1)
        return p

    common(sub.add_parser("simulate", help="run one scenario")).set_defaults(func=cmd_simulate)
    common(sub.add_parser("atlas", help="constraint atlas and manifold certificate")).set_defaults(func=cmd_atlas)
    common(sub.add_parser("design-lqr", help="LQR gains for the linearized plane")).set_defaults(func=cmd_design_lqr)
    common(sub.add_parser("check-stability", help="gain and region audit")).set_defaults(func=cmd_check_stability)
    sw = common(sub.add_parser("sweep", help="metrics across sizes, seeds or a gain"))
    sw.add_argument("--axis", choices=AXES, default="size")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--gain-key", default=None, help="dotted config key for gain sweeps")
    sw.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptySwarm) as exc:
        key = getattr(exc, "key", None)
        print(f"config error{f' [{key}]' if key else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityRejected as exc:
        print(f"stability: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except RUNTIME_ERRORS as exc:
        print(f"runtime: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
