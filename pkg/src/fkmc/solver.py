"""Fixed-point solver for ``-A u = F(x, u) + mu`` via ``u = R F(., u) + R mu``.

The ensemble behind ``Phi(u) = R F(., u) + R mu`` is frozen by the shared seed,
so ``Phi`` is a deterministic map and the damped iteration
``u <- (1 - lam) u + lam Phi(u)`` can be judged by its sup-norm increments.
Paths are regenerated from their keys on every application rather than stored.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .errors import ConfigError, DivergenceError, NumericError
from .grid import GridFunction, Mesh, as_field
from .measures import MeasureSpec
from .operators import _fill, _tail, eval_points, path_stats
from .process import MCParams, ProcessSpec
from .stream import run_paths

# stream tags keep the auxiliary estimates independent of the frozen ensemble
STREAM_PHI = 0
STREAM_APRIORI = 101
STREAM_REVALIDATE = 102
STREAM_BSDE = 103


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``F: E x R^N -> R^N`` with its declared structural bounds.

    ``fn(x, y)`` takes ``(n, d)`` states and ``(n, N)`` values.  ``sign_bound`` is
    the ``G`` with ``<F(x, y), y> <= G(x) |y|``; ``local_bound(r, x)`` bounds
    ``sup_{|y| <= r} |F(x, y)|``.
    """

    n_comp: int
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sign_bound: Callable[[np.ndarray], np.ndarray] | float = 0.0
    monotone: bool = False
    local_bound: Callable[[float, np.ndarray], np.ndarray] | None = None
    name: str = ""
    is_zero: bool = False

    @classmethod
    def zero(cls, n_comp: int = 1) -> "Nonlinearity":
        return cls(n_comp, lambda x, y: np.zeros_like(y), 0.0, True,
                   lambda r, x: np.zeros(len(x)), "zero", True)

    def __call__(self, x, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        return np.asarray(self.fn(np.asarray(x, dtype=float), y), dtype=float).reshape(y.shape)

    def G(self, x) -> np.ndarray:
        if callable(self.sign_bound):
            return np.asarray(self.sign_bound(x), dtype=float).reshape(len(x))
        return np.full(len(x), float(self.sign_bound))


def truncate_nonlinearity(F: Nonlinearity, n: float, g=1.0) -> Nonlinearity:
    """``F_n = n g / (1 + n g) * n F / max(|F|, n)``; ``|F_n| <= n`` and the sign bound is kept."""
    if not n >= 1:
        raise ConfigError(f"truncation level must be >= 1, got {n}")
    g_fn = as_field(g)

    def fn(x, y):
        val = F(x, y)
        gx = np.asarray(g_fn(x), dtype=float).reshape(len(x))
        if np.any(gx <= 0):
            raise ConfigError("truncation weight g must be strictly positive")
        norm = np.linalg.norm(val, axis=1)
        scale = (n * gx / (1.0 + n * gx)) * n / np.maximum(norm, n)
        return val * scale[:, None]

    def local(r, x):
        return np.full(len(x), float(n)) if F.local_bound is None else \
            np.minimum(F.local_bound(r, x), n)

    return Nonlinearity(F.n_comp, fn, F.sign_bound, F.monotone, local,
                        f"{F.name}_trunc{n:g}", F.is_zero)


@dataclass(frozen=True)
class SolveConfig:
    damping: float | None = None  # default: 1 for monotone F, 0.5 otherwise
    max_iters: int = 50
    tol_fix: float = 1e-4
    truncation: float | None = None
    truncation_weight: float = 1.0
    shared_seed: int = rng.DEFAULT_SEED
    alpha_shift: float = 0.0
    mc: MCParams = field(default_factory=MCParams)
    bsde_horizon: float | None = 0.1
    bsde_paths: int | None = None
    revalidate: bool = True
    localization_level: float | None = None

    def __post_init__(self):
        if self.damping is not None and not (0.0 < self.damping <= 1.0):
            raise ConfigError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tol_fix > 0:
            raise ConfigError(f"tol_fix must be positive, got {self.tol_fix}")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")
        if self.alpha_shift < 0:
            raise ConfigError("alpha_shift must be non-negative")

    def frozen_mc(self, stream: int = STREAM_PHI) -> MCParams:
        return self.mc.replace(seed=self.shared_seed, stream=stream)


@dataclass(eq=False)
class SolveReport:
    u: GridFunction
    distances: list[float]
    iterates: list[np.ndarray]
    converged: bool
    damping: float
    tol_fix: float
    apriori_fractions: list[float] = field(default_factory=list)
    envelope: np.ndarray | None = None
    envelope_se: np.ndarray | None = None
    phi_se: np.ndarray | None = None
    censored_fraction: float = 0.0
    tail_bound: float = 0.0
    tail_ok: bool = True
    seed_bias: float | None = None
    seed_bias_se: float | None = None
    bsde: "BSDEResidual | None" = None
    uninformative_points: list[int] = field(default_factory=list)
    quasi_integrable: bool = True
    note: str = ""

    @property
    def iterations(self) -> int:
        return len(self.distances)

    @property
    def apriori_violation(self) -> float:
        return max(self.apriori_fractions) if self.apriori_fractions else 0.0

    def to_dict(self) -> dict:
        out = {
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "damping": self.damping,
            "tol_fix": self.tol_fix,
            "iteration_table": [{"k": k + 1, "sup_distance": d, "apriori_violation": a}
                                for k, (d, a) in enumerate(
                                    zip(self.distances, self.apriori_fractions
                                        or [None] * len(self.distances)))],
            "apriori_violation": self.apriori_violation,
            "censored_fraction": self.censored_fraction,
            "tail_bound": self.tail_bound,
            "tail_ok": bool(self.tail_ok),
            "seed_bias": self.seed_bias,
            "seed_bias_se": self.seed_bias_se,
            "quasi_integrable": bool(self.quasi_integrable),
            "uninformative_points": list(map(int, self.uninformative_points)),
            "bsde": None if self.bsde is None else self.bsde.to_dict(),
            "sup_norm": self.u.sup_norm(),
            "note": self.note,
        }
        return out

    def to_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _pointwise_integrand(F: Nonlinearity, mu: MeasureSpec, u: GridFunction, dt: float,
                         extra=None):
    rate = None if mu.is_zero else mu.integrand(dt)

    def h(x):
        y = u(x)
        val = np.zeros_like(y) if F.is_zero else F(x, y)
        if rate is not None:
            val = val + rate(x)
        if extra is not None:
            val = val + extra(x)
        return val
    return h


def _phi_estimate(spec, F, mu, u: GridFunction, mc: MCParams, alpha: float):
    pts, inside = eval_points(spec, u.mesh)
    n = u.n_comp
    if F.is_zero and mu.is_zero:
        z = np.zeros((len(pts), n))
        return z, z.copy(), np.zeros(len(pts)), 0.0, True
    try:
        out = run_paths(spec, pts[inside], mc, indices=np.flatnonzero(inside),
                        integrand=_pointwise_integrand(F, mu, u, mc.dt), discounts=(alpha,))
    except NumericError as err:
        state = getattr(err, "state", None)
        if state is None:
            raise
        y = u(state[None])[0]
        raise NumericError(f"non-finite F at x={state.tolist()}, y={y.tolist()}") from err
    mean, se = path_stats(out.integrals[:, :, 0, :])
    cens = _fill(len(pts), inside, out.censored.mean(axis=1)[:, None], 1)[:, 0]
    sup_h = float(np.max(np.abs(mean))) * (alpha if alpha > 0 else 1.0)
    bound, ok = _tail(alpha, sup_h, mc, cens) if alpha > 0 or spec.domain is not None else (0.0, True)
    return _fill(len(pts), inside, mean, n), _fill(len(pts), inside, se, n), cens, bound, ok


def phi_apply(spec: ProcessSpec, F: Nonlinearity, mu: MeasureSpec, u: GridFunction,
              cfg: SolveConfig) -> GridFunction:
    """``Phi(u) = R_alpha F(., u) + R_alpha mu`` on the frozen ensemble, as a mesh function."""
    mu.validate(spec)
    _check_shapes(F, mu, u)
    vals, *_ = _phi_estimate(spec, F, mu, u, cfg.frozen_mc(), cfg.alpha_shift)
    return u.with_values(vals)


def _check_shapes(F, mu, u):
    if not (F.n_comp == mu.n_comp == u.n_comp):
        raise ConfigError(f"component mismatch: F has {F.n_comp}, mu {mu.n_comp}, u {u.n_comp}")


def apriori_envelope(spec: ProcessSpec, F: Nonlinearity, mu: MeasureSpec, mesh: Mesh,
                     mc: MCParams, alpha: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """``v = R G + R |mu|`` on the mesh with its standard error."""
    pts, inside = eval_points(spec, mesh)
    rate = mu.abs().integrand(mc.dt)

    def h(x):
        return F.G(x) + np.abs(rate(x)).sum(axis=1)
    out = run_paths(spec, pts[inside], mc, indices=np.flatnonzero(inside), integrand=h,
                    discounts=(alpha,))
    mean, se = path_stats(out.integrals[:, :, 0, :])
    return _fill(len(pts), inside, mean, 1)[:, 0], _fill(len(pts), inside, se, 1)[:, 0]


def _violations(u_vals, u_se, v, v_se) -> float:
    norm = np.linalg.norm(u_vals, axis=1)
    se = np.sqrt(v_se**2 + (np.linalg.norm(u_se, axis=1) if u_se is not None else 0.0) ** 2)
    return float(np.mean(norm > v + 3.0 * se))


def solve(spec: ProcessSpec, F: Nonlinearity, mu: MeasureSpec, cfg: SolveConfig, mesh: Mesh,
          initial: GridFunction | None = None) -> SolveReport:
    """Damped Picard iteration from ``initial`` (default 0) with diagnostics attached."""
    mu.validate(spec)
    if cfg.max_iters < 1:
        raise NumericError("no iterations performed (max_iters = 0)")
    if cfg.alpha_shift == 0 and spec.domain is None:
        raise ConfigError("alpha_shift = 0 needs a killing domain (non-transient configuration)")
    F_used = F if cfg.truncation is None else truncate_nonlinearity(F, cfg.truncation,
                                                                    cfg.truncation_weight)
    lam = cfg.damping if cfg.damping is not None else (1.0 if F.monotone else 0.5)
    v, v_se = apriori_envelope(spec, F, mu, mesh, cfg.frozen_mc(STREAM_APRIORI), cfg.alpha_shift)
    limit = 10.0 * float(v.max()) if len(v) else 0.0
    u = initial if initial is not None else GridFunction.zeros(mesh, F.n_comp, spec.domain)
    if u.domain is None and spec.domain is not None:
        u = GridFunction(mesh, u.values, spec.domain)
    _check_shapes(F_used, mu, u)
    report = SolveReport(u, [], [], False, lam, cfg.tol_fix, envelope=v, envelope_se=v_se)
    mc = cfg.frozen_mc()
    for _ in range(cfg.max_iters):
        phi, phi_se, cens, bound, ok = _phi_estimate(spec, F_used, mu, u, mc, cfg.alpha_shift)
        new_vals = (1.0 - lam) * u.values + lam * phi
        dist = float(np.max(np.abs(new_vals - u.values))) if new_vals.size else 0.0
        u = u.with_values(new_vals)
        report.u = u
        report.distances.append(dist)
        report.iterates.append(u.values.copy())
        report.apriori_fractions.append(_violations(u.values, lam * phi_se, v, v_se))
        report.phi_se = phi_se
        report.censored_fraction = float(cens.max()) if len(cens) else 0.0
        report.tail_bound, report.tail_ok = bound, ok
        if u.sup_norm() > limit and u.sup_norm() > 1e-12:
            report.note = (f"diverged: sup norm {u.sup_norm():.4g} exceeds 10x the a-priori "
                           f"bound {float(v.max()):.4g}")
            raise DivergenceError(report.note, report)
        if dist <= cfg.tol_fix:
            report.converged = True
            break
    if not report.converged:
        report.note = f"not converged after {cfg.max_iters} iterations"
    if cfg.localization_level is not None:
        report.uninformative_points = np.flatnonzero(
            ~np.isfinite(v) | (v >= cfg.localization_level)).tolist()
    if cfg.revalidate:
        fresh, fresh_se, *_ = _phi_estimate(spec, F_used, mu, u, cfg.frozen_mc(STREAM_REVALIDATE),
                                            cfg.alpha_shift)
        report.seed_bias = float(np.max(np.abs(fresh - u.values))) if fresh.size else 0.0
        report.seed_bias_se = float(np.max(fresh_se)) if fresh_se.size else 0.0
    if cfg.bsde_horizon is not None and cfg.alpha_shift == 0:
        bmc = cfg.frozen_mc(STREAM_BSDE)
        if cfg.bsde_paths is not None:
            bmc = bmc.replace(n_paths=cfg.bsde_paths)
        report.bsde = bsde_residual(spec, u, F_used, mu, cfg.bsde_horizon, bmc,
                                    u_se=lam * report.phi_se)
    return report


def apriori_check(spec: ProcessSpec, report: SolveReport, F: Nonlinearity, mu: MeasureSpec,
                  mc: MCParams) -> float:
    """Fraction of mesh points where ``|u| > v + 3 SE`` for ``v = R G + R |mu|``."""
    v, v_se = apriori_envelope(spec, F, mu, report.u.mesh, mc)
    return _violations(report.u.values, report.phi_se, v, v_se)


@dataclass(frozen=True, eq=False)
class BSDEResidual:
    mean: np.ndarray  # (M, N)
    stderr: np.ndarray
    z: np.ndarray
    simulated: np.ndarray  # (M,) points that were simulated
    horizon: float
    fraction_ok: float
    passed: bool

    def to_dict(self) -> dict:
        zs = np.abs(self.z[self.simulated])
        return {"horizon": self.horizon, "fraction_within_3se": self.fraction_ok,
                "max_abs_z": float(zs.max()) if zs.size else 0.0, "passed": bool(self.passed)}


def bsde_residual(spec: ProcessSpec, u: GridFunction, F: Nonlinearity, mu: MeasureSpec,
                  T: float, mc: MCParams, u_se=None) -> BSDEResidual:
    """Mean of ``u(X_0) - u(X_{T^zeta}) - int F(X, u(X)) dr - A^mu_{T^zeta}`` per start point.

    The martingale part has zero expectation, so a solution gives z-scores of
    order one.  ``u_se`` is the Monte Carlo error of the mesh values themselves;
    it enters ``D`` with weight one and is added to the path SE in quadrature.
    ``passed`` requires ``|z| <= 3`` on at least 95% of the simulated points.
    """
    if not T > 0:
        raise ConfigError("BSDE horizon must be positive")
    if not np.all(np.isfinite(u.values)):
        raise NumericError("u has non-finite mesh values")
    pts, inside = eval_points(spec, u.mesh)
    n = u.n_comp
    mc_t = mc.replace(horizon=T, dt=T / max(1, math.ceil(T / mc.dt - 1e-9)))
    out = run_paths(spec, pts[inside], mc_t, indices=np.flatnonzero(inside),
                    integrand=_pointwise_integrand(F, mu, u, mc_t.dt), on_horizon=u)
    u0 = u.values[inside][:, None, :]
    terminal = out.terminal if out.terminal is not None else 0.0
    d = u0 - terminal - out.integrals[:, :, 0, :]
    mean, se = path_stats(d)
    if u_se is not None:
        se = np.sqrt(se**2 + np.asarray(u_se, dtype=float).reshape(len(pts), n)[inside] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, mean / se, np.where(mean == 0, 0.0, np.inf))
    mean, se, z = (_fill(len(pts), inside, a, n) for a in (mean, se, z))
    ok = np.all(np.abs(z[inside]) <= 3.0, axis=1)
    frac = float(ok.mean()) if ok.size else 1.0
    return BSDEResidual(mean, se, z, inside, T, frac, frac >= 0.95)
