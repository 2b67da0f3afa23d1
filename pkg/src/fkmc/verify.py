"""The catalog acceptance suite: named PASS/FAIL checks against each entry's oracle."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .catalog import CatalogEntry, instantiate, list_entries
from .compactness import FunctionFamily, order_compactness_test
from .errors import ConfigError
from .grid import GridFunction, Mesh
from .operators import check_dynkin_split, check_resolvent_identity, resolvent_apply
from .process import MCParams
from .regions import Box
from .rng import DEFAULT_SEED
from .solver import SolveConfig, SolveReport, bsde_residual, solve
from .stream import run_paths


@dataclass(frozen=True)
class Settings:
    """Overrides applied on top of an entry's defaults (None keeps the default)."""

    n_paths: int | None = None
    dt: float | None = None
    seed: int = DEFAULT_SEED
    workers: int | None = None
    tol_fix: float | None = None
    mesh_points: int | None = None

    def get(self, entry: CatalogEntry, key: str, default=None):
        own = getattr(self, key, None)
        if own is not None:
            return own
        if key in entry.defaults:
            return entry.defaults[key]
        if default is None:
            raise ConfigError(f"{entry.name}: no default for {key!r}")
        return default

    def mc(self, entry: CatalogEntry, **extra) -> MCParams:
        return MCParams(n_paths=int(self.get(entry, "n_paths")), dt=float(self.get(entry, "dt")),
                        seed=self.seed, workers=self.workers, **extra)

    def mesh(self, entry: CatalogEntry) -> Mesh:
        return entry.mesh(self.mesh_points)


@dataclass
class CheckResult:
    check: str
    entry: str
    passed: bool
    value: float
    threshold: float
    detail: dict[str, Any] = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return (f"{self.status} {self.entry}/{self.check}: value={self.value:.6g} "
                f"threshold={self.threshold:.6g}")

    def to_dict(self) -> dict:
        return {"check": self.check, "entry": self.entry, "passed": bool(self.passed),
                "value": float(self.value), "threshold": float(self.threshold),
                "detail": _jsonable(self.detail)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


class CheckContext:
    """Per-entry cache so several checks can share one solve."""

    def __init__(self, entry: CatalogEntry, settings: Settings, out_dir: str | None):
        self.entry = entry
        self.settings = settings
        self.out_dir = out_dir
        self._solve: SolveReport | None = None

    def path(self, name: str) -> str | None:
        if self.out_dir is None:
            return None
        d = os.path.join(self.out_dir, self.entry.name)
        os.makedirs(d, exist_ok=True)
        return os.path.join(d, name)

    def solve_config(self, **over) -> SolveConfig:
        e, s = self.entry, self.settings
        cfg = SolveConfig(
            damping=1.0 if e.F.monotone else None,
            max_iters=int(e.defaults.get("max_iters", 50)),
            tol_fix=float(s.get(e, "tol_fix", 1e-4)),
            shared_seed=s.seed,
            mc=s.mc(e),
            bsde_horizon=e.defaults.get("bsde_horizon"),
            bsde_paths=e.defaults.get("bsde_paths"),
        )
        return replace(cfg, **over)

    def solve(self) -> SolveReport:
        if self._solve is None:
            self._solve = solve(self.entry.spec, self.entry.F, self.entry.mu, self.solve_config(),
                                self.settings.mesh(self.entry))
            p = self.path("solve_report.json")
            if p:
                with open(p, "w") as fh:
                    fh.write(self._solve.to_text())
                self._solve.u.to_csv(self.path("solution.csv"))
        return self._solve


def _sup_error(est_vals: np.ndarray, oracle_vals: np.ndarray) -> float:
    return float(np.max(np.abs(est_vals - oracle_vals)))


def check_oracle(ctx: CheckContext) -> CheckResult:
    """Linear entries (F = 0): ``R mu`` against the closed form on the mesh."""
    e = ctx.entry
    mesh = ctx.settings.mesh(e)
    mc = ctx.settings.mc(e)
    est = resolvent_apply(e.spec, e.mu.integrand(mc.dt), 0.0, mc, points=mesh)
    if ctx.path("estimate.csv"):
        est.to_csv(ctx.path("estimate.csv"))
    err = _sup_error(est.mean, e.oracle_grid(mesh).values)
    tol = e.tolerances["sup_error"]
    return CheckResult("oracle", e.name, err <= tol, err, tol,
                       {"max_stderr": float(est.stderr.max()), "n_paths": mc.n_paths, "dt": mc.dt,
                        "mesh_points": len(mesh)})


def _identity_mc(ctx: CheckContext, stream: int) -> MCParams:
    """Nested-estimate checks run on their own (smaller) default path budget."""
    e, s = ctx.entry, ctx.settings
    n = s.n_paths if s.n_paths is not None else e.defaults.get("identity_paths", e.defaults["n_paths"])
    return s.mc(e, stream=stream).replace(n_paths=int(n))


def check_resolvent_identity_entry(ctx: CheckContext, alpha: float = 1.0, beta: float = 2.0):
    e = ctx.entry
    rep = check_resolvent_identity(e.spec, e.mu.integrand(ctx.settings.get(e, "dt")), alpha, beta,
                                   _identity_mc(ctx, 11), ctx.settings.mesh(e))
    return CheckResult("resolvent-identity", e.name, rep.passed, rep.sup_residual, rep.tolerance,
                       rep.to_dict())


def check_dynkin_entry(ctx: CheckContext, alpha: float = 0.0, region=None):
    e = ctx.entry
    region = region if region is not None else Box([0.25], [0.75])
    rep = check_dynkin_split(e.spec, e.mu.integrand(ctx.settings.get(e, "dt")), region, alpha,
                             _identity_mc(ctx, 21), ctx.settings.mesh(e))
    return CheckResult("dynkin-split", e.name, rep.passed, rep.sup_residual, rep.tolerance,
                       rep.to_dict())


def check_compactness(ctx: CheckContext, K: int = 20, n_paths: int = 2000, dt: float = 1e-4,
                      mesh_points: int = 41, band=(-2.4, -1.6)) -> CheckResult:
    """Sine family ``(1 + sin(k pi x))/2`` under ``R_0``: image-distance decay slope."""
    e = ctx.entry
    mesh = Mesh.interval(0.0, 1.0, mesh_points)
    fam = FunctionFamily.sine(mesh, K, e.spec.domain)
    mc = MCParams(n_paths=n_paths, dt=dt, seed=ctx.settings.seed, stream=31,
                  workers=ctx.settings.workers)
    rep = order_compactness_test(e.spec, fam, 0.0, [0.01, 0.05, 0.1], mc)
    if ctx.path("compactness.json"):
        with open(ctx.path("compactness.json"), "w") as fh:
            fh.write(rep.to_text())
        rep.write_csv(ctx.path("compactness"))
    slope = rep.decay_slope
    ok = band[0] <= slope <= band[1]
    return CheckResult("compactness-decay", e.name, ok, slope, band[1],
                       {"band": list(band), "smoothing_ratio": rep.smoothing_ratio,
                        "chain_length_eps_0.05": rep.chains[0.05].length, "K": K})


def check_solve_oracle(ctx: CheckContext) -> CheckResult:
    e = ctx.entry
    rep = ctx.solve()
    ref = e.oracle_grid(rep.u.mesh).values
    err = _sup_error(rep.u.values, ref)
    scale = float(np.max(np.linalg.norm(ref, axis=1)))
    rel = err / scale
    tol = e.tolerances.get("relative_sup_error", e.tolerances.get("sup_error", 0.05) / scale)
    ok = rel <= tol and rep.converged and rep.iterations <= 50
    return CheckResult("solve-oracle", e.name, ok, rel, tol,
                       {"converged": rep.converged, "iterations": rep.iterations,
                        "damping": rep.damping, "sup_error": err, "oracle_sup": scale})


def check_apriori(ctx: CheckContext) -> CheckResult:
    e = ctx.entry
    rep = ctx.solve()
    worst = rep.apriori_violation
    tol = e.tolerances.get("apriori_fraction", 0.05)
    return CheckResult("apriori-bound", e.name, worst <= tol, worst, tol,
                       {"per_iterate": rep.apriori_fractions})


def check_bsde(ctx: CheckContext) -> CheckResult:
    """BSDE residual on the converged solution, plus the corrupted-solution control."""
    e = ctx.entry
    rep = ctx.solve()
    if rep.bsde is None:
        raise ConfigError(f"{e.name}: BSDE diagnostics need a killing domain and alpha_shift = 0")
    shift = e.tolerances.get("corruption", 0.2)
    bad_u = rep.u.with_values(rep.u.values + shift)
    bmc = ctx.solve_config().frozen_mc(103).replace(n_paths=e.defaults.get("bsde_paths"))
    control = bsde_residual(e.spec, bad_u, e.F, e.mu, rep.bsde.horizon, bmc,
                            u_se=rep.damping * rep.phi_se)
    ok = rep.bsde.passed and not control.passed
    return CheckResult("bsde-residual", e.name, ok, rep.bsde.fraction_ok, 0.95,
                       {"solution": rep.bsde.to_dict(), "corrupted_control": control.to_dict(),
                        "corruption": shift})


def check_uniqueness(ctx: CheckContext) -> CheckResult:
    """Second solve started from the a-priori envelope must land on the first limit."""
    e = ctx.entry
    first = ctx.solve()
    v = first.envelope
    N = e.F.n_comp
    start = GridFunction(first.u.mesh, np.repeat(v[:, None], N, axis=1) / np.sqrt(N),
                         e.spec.domain)
    cfg = ctx.solve_config(bsde_horizon=None, revalidate=False)
    second = solve(e.spec, e.F, e.mu, cfg, first.u.mesh, initial=start)
    gap = float(np.max(np.abs(first.u.values - second.u.values)))
    tol = 2.0 * cfg.tol_fix
    ok = gap <= tol and first.converged and second.converged
    return CheckResult("uniqueness", e.name, ok, gap, tol,
                       {"iterations": [first.iterations, second.iterations]})


def check_seed_consistency(ctx: CheckContext) -> CheckResult:
    """Two independent seeds agree within 3 combined standard errors at every point."""
    e = ctx.entry
    first = ctx.solve()
    other = solve(e.spec, e.F, e.mu,
                  ctx.solve_config(shared_seed=ctx.settings.seed + 1, bsde_horizon=None,
                                   revalidate=False), first.u.mesh)
    se = np.sqrt((first.damping * first.phi_se) ** 2 + (other.damping * other.phi_se) ** 2)
    gap = np.abs(first.u.values - other.u.values)
    inside = se > 0
    z = float(np.max(gap[inside] / se[inside])) if inside.any() else 0.0
    tol = e.tolerances.get("z_max", 3.0)
    return CheckResult("seed-consistency", e.name, z <= tol, z, tol,
                       {"max_gap": float(gap.max()), "converged": [first.converged, other.converged]})


def check_covariance(ctx: CheckContext) -> CheckResult:
    """Empirical ``Cov(X_t)`` from the start point against the closed-form ``Q_t``."""
    e = ctx.entry
    t = float(e.defaults["t"])
    mc = ctx.settings.mc(e, horizon=t)
    start = np.atleast_2d(np.asarray(e.defaults["start"], dtype=float))
    out = run_paths(e.spec, start, mc, on_horizon=lambda x: x)
    X = out.terminal[0]
    n = len(X)
    c = X - X.mean(axis=0)
    prods = c[:, :, None] * c[:, None, :]
    cov = prods.sum(axis=0) / (n - 1)
    se = prods.std(axis=0, ddof=1) / np.sqrt(n)
    ref = e.covariance(t)
    z = np.abs(cov - ref) / se
    zmax = float(z.max())
    tol = e.tolerances["z_max"]
    return CheckResult("covariance", e.name, zmax <= tol, zmax, tol,
                       {"empirical": cov, "oracle": ref, "stderr": se, "n_paths": n, "t": t})


CHECKS: dict[str, Callable[[CheckContext], CheckResult]] = {
    "oracle": check_oracle,
    "resolvent-identity": check_resolvent_identity_entry,
    "dynkin-split": check_dynkin_entry,
    "compactness-decay": check_compactness,
    "solve-oracle": check_solve_oracle,
    "apriori-bound": check_apriori,
    "bsde-residual": check_bsde,
    "uniqueness": check_uniqueness,
    "seed-consistency": check_seed_consistency,
    "covariance": check_covariance,
}

ENTRY_CHECKS: dict[str, tuple[str, ...]] = {
    "poisson-interval": ("oracle", "resolvent-identity", "dynkin-split", "compactness-decay"),
    "manufactured-sine": ("solve-oracle", "bsde-residual", "uniqueness"),
    "rotation-system": ("solve-oracle", "apriori-bound", "bsde-residual", "uniqueness"),
    "double-well": ("solve-oracle", "apriori-bound"),
    "ou-2d": ("covariance",),
    "stable-interval": ("seed-consistency", "uniqueness"),
    "dirac-interval": ("oracle",),
}


def run_checks(name: str, settings: Settings = Settings(), checks=None,
               out_dir: str | None = None, entry: CatalogEntry | None = None) -> list[CheckResult]:
    entry = entry if entry is not None else instantiate(name)
    names = tuple(checks) if checks is not None else ENTRY_CHECKS[entry.name]
    unknown = [c for c in names if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    ctx = CheckContext(entry, settings, out_dir)
    return [CHECKS[c](ctx) for c in names]


def verify(entries=None, settings: Settings = Settings(), out_dir: str | None = None,
           checks=None) -> list[CheckResult]:
    """Run the suite over ``entries`` (default: all) and write ``verify.json`` and a summary."""
    names = list(entries) if entries else list_entries()
    results: list[CheckResult] = []
    for name in names:
        results.extend(run_checks(name, settings, checks, out_dir))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "verify.json"), "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out_dir, "verify_summary.txt"), "w") as fh:
            fh.writelines(r.line() + "\n" for r in results)
    return results
