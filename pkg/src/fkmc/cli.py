"""Command-line front end.

Exit codes: 0 success, 1 acceptance failure (or no convergence), 2 configuration
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings

import numpy as np

from .compactness import FunctionFamily, check_m1, order_compactness_test
from .config import COMMANDS, RunConfig, build, load_document
from .ensemble import simulate_ensemble
from .errors import ConfigError, NumericError
from .fields import field_from_record
from .grid import GridFunction
from .operators import resolvent_apply, semigroup_apply
from .solver import SolveConfig, apriori_envelope, solve
from .verify import Settings, verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _floats(tab, key, default):
    v = tab.get(key, default)
    if not isinstance(v, list) or not v or not all(isinstance(a, (int, float)) for a in v):
        raise ConfigError(f"{key}: expected a non-empty list of numbers, got {v!r}")
    return [float(a) for a in v]


def cmd_simulate(cfg: RunConfig, args) -> int:
    spec = cfg.require("spec")
    tab = cfg.section("simulate")
    if "start" not in tab:
        raise ConfigError("simulate.start: required")
    ens = simulate_ensemble(spec, _floats(tab, "start", None), cfg.mc)
    ens.dump(_out(cfg, "ensemble.fke"))
    finite = np.isfinite(ens.lifetime)
    summary = {"n_paths": ens.n_paths, "dt": ens.dt, "horizon": ens.horizon, "seed": ens.seed,
               "start": ens.start.tolist(), "exited_fraction": float(ens.exited.mean()),
               "mean_lifetime_exited": float(ens.lifetime[ens.exited].mean())
               if ens.exited.any() else None,
               "censored_fraction": float(1.0 - ens.exited.mean()),
               "finite_lifetimes": int(finite.sum())}
    _write_json(_out(cfg, "simulate.json"), summary)
    print(f"simulated {ens.n_paths} paths; exited fraction {summary['exited_fraction']:.4f}")
    return EXIT_OK


def cmd_resolvent(cfg: RunConfig, args) -> int:
    spec = cfg.require("spec")
    mesh = cfg.require("mesh")
    tab = cfg.section("resolvent")
    if "f" in tab:
        f = field_from_record(tab["f"])
    elif cfg.mu is not None:
        cfg.mu.validate(spec)
        f = cfg.mu.integrand(cfg.mc.dt)
    else:
        raise ConfigError("resolvent.f: required when no entry or measure is given")
    op = tab.get("operator", "resolvent")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if op == "resolvent":
            alpha = float(tab.get("alpha", 0.0))
            est = resolvent_apply(spec, f, alpha, cfg.mc, points=mesh)
        elif op == "semigroup":
            if "t" not in tab:
                raise ConfigError("resolvent.t: required for operator = 'semigroup'")
            est = semigroup_apply(spec, f, float(tab["t"]), cfg.mc, points=mesh)
        else:
            raise ConfigError(f"resolvent.operator: expected 'resolvent' or 'semigroup', got {op!r}")
    est.to_csv(_out(cfg, "estimate.csv"))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"wrote {len(est.points)} points to {_out(cfg, 'estimate.csv')}")
    return EXIT_OK


def _solve_config(cfg: RunConfig, tol: float | None) -> SolveConfig:
    tab = cfg.section("solve")
    kw = {}
    for key in ("damping", "tol_fix", "truncation", "truncation_weight", "alpha_shift",
                "bsde_horizon"):
        if key in tab:
            kw[key] = float(tab[key])
    for key in ("max_iters", "bsde_paths"):
        if key in tab:
            if not isinstance(tab[key], int):
                raise ConfigError(f"solve.{key}: expected an integer")
            kw[key] = tab[key]
    if "revalidate" in tab:
        kw["revalidate"] = bool(tab["revalidate"])
    if cfg.entry is not None:
        d = cfg.entry.defaults
        kw.setdefault("tol_fix", d.get("tol_fix", 1e-4))
        kw.setdefault("bsde_horizon", d.get("bsde_horizon"))
        kw.setdefault("bsde_paths", d.get("bsde_paths"))
        kw.setdefault("max_iters", d.get("max_iters", 50))
    if tol is not None:
        kw["tol_fix"] = tol
    return SolveConfig(shared_seed=cfg.mc.seed, mc=cfg.mc, **kw)


def cmd_solve(cfg: RunConfig, args) -> int:
    spec, F, mu, mesh = (cfg.require(k) for k in ("spec", "F", "mu", "mesh"))
    scfg = _solve_config(cfg, args.tol)
    initial = None
    init = cfg.section("solve").get("initial", "zero")
    if init == "envelope":
        v, _ = apriori_envelope(spec, F, mu, mesh, scfg.frozen_mc(101), scfg.alpha_shift)
        initial = GridFunction(mesh, np.repeat(v[:, None], F.n_comp, axis=1) / np.sqrt(F.n_comp),
                               spec.domain)
    elif init != "zero":
        raise ConfigError(f"solve.initial: expected 'zero' or 'envelope', got {init!r}")
    report = solve(spec, F, mu, scfg, mesh, initial)
    with open(_out(cfg, "solve_report.json"), "w") as fh:
        fh.write(report.to_text())
    report.u.to_csv(_out(cfg, "solution.csv"))
    print(f"{'converged' if report.converged else 'NOT converged'} after {report.iterations} "
          f"iterations; last distance {report.distances[-1]:.3g}")
    return EXIT_OK if report.converged else EXIT_FAIL


def cmd_diagnose(cfg: RunConfig, args) -> int:
    spec, mesh = cfg.require("spec"), cfg.require("mesh")
    tab = cfg.section("diagnose")
    K = tab.get("K", 20)
    if not isinstance(K, int) or K < 1:
        raise ConfigError("diagnose.K: expected a positive integer")
    fam_kind = tab.get("family", "sine")
    if fam_kind == "sine":
        fam = FunctionFamily.sine(mesh, K, spec.domain)
    elif fam_kind == "constant":
        levels = (np.arange(1, K + 1) / K)[None, :]
        fam = FunctionFamily.from_values(mesh, np.repeat(levels, len(mesh), axis=0), 1.0,
                                         spec.domain)
    else:
        raise ConfigError(f"diagnose.family: expected 'sine' or 'constant', got {fam_kind!r}")
    alpha = float(tab.get("alpha", 0.0))
    eps = _floats(tab, "eps", [0.01, 0.05, 0.1])
    report = order_compactness_test(spec, fam, alpha, eps, cfg.mc)
    with open(_out(cfg, "compactness.json"), "w") as fh:
        fh.write(report.to_text())
    report.write_csv(_out(cfg, "compactness"))
    t_grid = _floats(tab, "t_grid", [0.1, 0.01, 10 * cfg.mc.dt, cfg.mc.dt])
    m1_tol = args.tol if args.tol is not None else float(tab.get("m1_tol", 0.05))
    prof = check_m1(spec, fam, t_grid, cfg.mc.replace(stream=cfg.mc.stream + 1), m1_tol)
    prof.to_csv(_out(cfg, "m1.csv"))
    _write_json(_out(cfg, "m1.json"), prof.to_dict())
    ratio = report.smoothing_ratio
    print(f"smoothing ratio {ratio if ratio is None else f'{ratio:.4g}'}; "
          f"decay slope {report.decay_slope:.3f}; M1 pass fraction {prof.pass_fraction:.3f}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    tab = cfg.section("verify")
    entries = args.entry or tab.get("entries") or ([cfg.entry.name] if cfg.entry else None)
    ov = cfg.mc_overrides
    settings = Settings(n_paths=ov.get("n_paths"), dt=ov.get("dt"), seed=cfg.mc.seed,
                        workers=ov.get("workers"), tol_fix=args.tol)
    results = verify(entries, settings, cfg.out_dir, tab.get("checks"))
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


HANDLERS = {"simulate": cmd_simulate, "resolvent": cmd_resolvent, "solve": cmd_solve,
            "diagnose": cmd_diagnose, "verify": cmd_verify}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fkmc", description="Monte Carlo Feynman-Kac solver")
    p.add_argument("command", nargs="?", choices=COMMANDS,
                   help="what to run (may also be set in the config)")
    p.add_argument("--config", metavar="PATH", help="TOML run configuration")
    p.add_argument("--seed", type=_u64, help="master seed (unsigned 64-bit)")
    p.add_argument("--paths", type=int, help="paths per evaluation point")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads (default: available cores)")
    p.add_argument("--tol", type=float, help="fixed-point tolerance (solve, verify) or "
                                             "M1 tolerance (diagnose)")
    p.add_argument("--entry", action="append", help="catalog entry (repeatable)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        doc = load_document(args.config) if args.config else {}
        if args.entry and "entry" not in doc and args.command != "verify":
            doc = {**doc, "entry": args.entry[0]}
        if args.paths is not None and args.paths < 1:
            raise ConfigError("--paths must be a positive integer")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be a positive integer")
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol must be positive")
        cfg = build(doc, args.command, seed=args.seed, n_paths=args.paths, dt=args.dt,
                    out=args.out, workers=args.workers)
        return HANDLERS[cfg.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as err:
        print(f"numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
