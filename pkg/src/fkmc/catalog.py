"""Named test problems, each paired with an oracle that does not use Monte Carlo."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError
from .grid import GridFunction, Mesh
from .measures import MeasureSpec
from .process import ProcessSpec, ou_transition
from .regions import Box
from .solver import Nonlinearity

SPOT_SEED = 7


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    """Process, nonlinearity and measure of one problem ``-A u = F(x, u) + mu``.

    ``oracle`` maps ``(n, d)`` points to ``(n, N)`` reference values, or is None
    when only seed self-consistency is available.  ``defaults`` are the Monte
    Carlo and mesh settings used by ``verify``; ``tolerances`` its thresholds.
    """

    name: str
    spec: ProcessSpec
    F: Nonlinearity
    mu: MeasureSpec
    oracle: Callable[[np.ndarray], np.ndarray] | None
    oracle_kind: str
    defaults: dict[str, Any]
    tolerances: dict[str, float]
    description: str = ""
    params: dict[str, Any] = field(default_factory=dict)
    covariance: Callable[[float], np.ndarray] | None = None
    y_scale: float = 2.0

    def mesh(self, n: int | None = None) -> Mesh:
        n = int(n or self.defaults.get("mesh_points", 21))
        box = self.spec.domain
        if self.spec.dimension != 1 or not isinstance(box, Box):
            raise ConfigError(f"{self.name}: no default mesh for this domain")
        return Mesh.interval(float(box.lo[0]), float(box.hi[0]), n)

    def oracle_grid(self, mesh: Mesh) -> GridFunction:
        if self.oracle is None:
            raise ConfigError(f"{self.name} has no closed-form or ODE oracle")
        return GridFunction(mesh, self.oracle(mesh.points), self.spec.domain)

    def spot_check(self, n: int = 1000, seed: int = SPOT_SEED) -> dict[str, Any]:
        return spot_check(self, n, seed)


def _sample_states(entry: CatalogEntry, n: int, rng: np.random.Generator) -> np.ndarray:
    d = entry.spec.dimension
    box = entry.spec.domain
    if isinstance(box, Box) and np.all(np.isfinite(box.lo + box.hi)):
        lo, hi = np.asarray(box.lo), np.asarray(box.hi)
        return lo + (hi - lo) * rng.random((n, d))
    return 2.0 * rng.standard_normal((n, d))


def spot_check(entry: CatalogEntry, n: int = 1000, seed: int = SPOT_SEED) -> dict[str, Any]:
    """Sampled checks of the declared structure of ``F``.

    Returns the worst sign-condition excess (must be <= 0), the worst
    monotonicity excess (must be <= 0 if monotone is declared, and is expected
    to be > 0 otherwise), the worst local-bound excess, and a continuity probe.
    """
    rng = np.random.default_rng(seed)
    F, N = entry.F, entry.F.n_comp
    x = _sample_states(entry, n, rng)
    y = entry.y_scale * rng.standard_normal((n, N))
    y2 = entry.y_scale * rng.standard_normal((n, N))
    fy, fy2 = F(x, y), F(x, y2)
    ny = np.linalg.norm(y, axis=1)
    tol = 1e-12 * (1.0 + ny**2 + np.linalg.norm(fy, axis=1) * ny)
    sign_excess = float(np.max(np.sum(fy * y, axis=1) - F.G(x) * ny - tol))
    dy = y - y2
    mono = np.sum((fy - fy2) * dy, axis=1) - 1e-12 * (1.0 + np.sum(dy**2, axis=1))
    # small perturbations probe monotonicity near the origin too
    y3 = 0.1 * rng.standard_normal((n, N))
    y4 = y3 + 1e-3 * rng.standard_normal((n, N))
    mono_small = np.sum((F(x, y3) - F(x, y4)) * (y3 - y4), axis=1) - 1e-15
    mono_excess = float(max(mono.max(), mono_small.max()))
    local_excess = None
    if F.local_bound is not None:
        r = 1.5 * entry.y_scale
        inside = ny <= r
        local_excess = float(np.max(np.linalg.norm(fy, axis=1)[inside]
                                    - F.local_bound(r, x[inside]))) if inside.any() else 0.0
    h = 1e-7
    jump = np.linalg.norm(F(x, y + h) - fy, axis=1)
    continuity = float(np.max(jump / (1.0 + ny**3)))
    return {
        "samples": n,
        "sign_excess": sign_excess,
        "sign_ok": sign_excess <= 0.0,
        "monotone_declared": F.monotone,
        "monotone_excess": mono_excess,
        "monotone_consistent": (mono_excess <= 0.0) == F.monotone,
        "local_bound_excess": local_excess,
        "local_bound_ok": local_excess is None or local_excess <= 1e-12,
        "continuity_modulus": continuity,
        "continuity_ok": continuity <= 1e-4,
    }


def _interval(lo=0.0, hi=1.0) -> Box:
    return Box([lo], [hi])


def _linear_F(coef: float, name: str) -> Nonlinearity:
    """``F(x, y) = coef * y`` with ``coef <= 0``."""
    return Nonlinearity(1, lambda x, y: coef * y, 0.0, True,
                        lambda r, x: np.full(len(x), abs(coef) * r), name)


def _poisson_interval(rhs: float = 1.0) -> CatalogEntry:
    spec = ProcessSpec.brownian(1, domain=_interval())
    return CatalogEntry(
        "poisson-interval", spec, Nonlinearity.zero(1), MeasureSpec.densities(rhs),
        lambda x: (rhs * x[:, 0] * (1.0 - x[:, 0]))[:, None], "closed-form",
        {"n_paths": 100_000, "dt": 1e-4, "mesh_points": 21, "identity_paths": 4000},
        {"sup_error": 0.02 * abs(rhs)},
        "killed Brownian motion on (0,1), F = 0, mu = c m; u = c x(1-x)", {"rhs": rhs})


def _manufactured_sine() -> CatalogEntry:
    spec = ProcessSpec.brownian(1, domain=_interval())
    c = math.pi**2 / 2 + 1
    return CatalogEntry(
        "manufactured-sine", spec, _linear_F(-1.0, "minus_u"),
        MeasureSpec.densities(lambda x: c * np.sin(np.pi * x[:, 0])),
        lambda x: np.sin(np.pi * x[:, 0])[:, None], "closed-form",
        {"n_paths": 10_000, "dt": 1e-4, "mesh_points": 11, "bsde_paths": 4000,
         "bsde_horizon": 0.1, "tol_fix": 1e-4, "max_iters": 50},
        {"relative_sup_error": 0.05, "corruption": 0.2},
        "F(u) = -u, mu = (pi^2/2 + 1) sin(pi x) m on (0,1); u = sin(pi x)")


def _rotation_system() -> CatalogEntry:
    spec = ProcessSpec.brownian(1, domain=_interval())

    def fn(x, y):
        return np.stack([-y[:, 1] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    F = Nonlinearity(2, fn, 0.0, True, lambda r, x: np.full(len(x), math.sqrt(2.0) * r),
                     "rotation")
    mu = MeasureSpec.densities(lambda x: np.sin(np.pi * x[:, 0]), 0.0)
    # (a, b) sin(pi x) solves the linear system exactly
    c = math.pi**2 / 2 + 1
    a, b = c / (c * c + 1), 1.0 / (c * c + 1)
    return CatalogEntry(
        "rotation-system", spec, F, mu,
        lambda x: np.outer(np.sin(np.pi * x[:, 0]), [a, b]), "closed-form",
        {"n_paths": 4000, "dt": 1e-4, "mesh_points": 11, "tol_fix": 1e-4, "max_iters": 50,
         "bsde_paths": 4000, "bsde_horizon": 0.1},
        {"relative_sup_error": 0.05, "apriori_fraction": 0.05},
        "N = 2, F(y) = (-y2, y1) - y, mu = (sin(pi x), 0) m on (0,1)")


def bvp_oracle(F_scalar: Callable[[np.ndarray], np.ndarray], source: Callable[[np.ndarray], np.ndarray],
               dF: Callable[[np.ndarray], np.ndarray], lo: float = 0.0, hi: float = 1.0,
               nodes: int = 401) -> Callable[[np.ndarray], np.ndarray]:
    """Solve ``-u''/2 = F(u) + f(x)`` with zero boundary values by scipy's collocation BVP solver."""
    from scipy.integrate import solve_bvp

    def rhs(x, z):
        return np.vstack([z[1], -2.0 * (F_scalar(z[0]) + source(x))])

    def jac(x, z):
        n = len(x)
        out = np.zeros((2, 2, n))
        out[0, 1] = 1.0
        out[1, 0] = -2.0 * dF(z[0])
        return out

    def bc(za, zb):
        return np.array([za[0], zb[0]])

    xs = np.linspace(lo, hi, nodes)
    guess = np.vstack([(xs - lo) * (hi - xs), (lo + hi) - 2 * xs])
    sol = solve_bvp(rhs, bc, xs, guess, fun_jac=jac, tol=1e-10, max_nodes=200_000)
    if not sol.success:
        raise ConfigError(f"oracle BVP solve failed: {sol.message}")

    def oracle(x):
        x0 = np.asarray(x, dtype=float)[:, 0]
        v = np.where((x0 > lo) & (x0 < hi), sol.sol(np.clip(x0, lo, hi))[0], 0.0)
        return v[:, None]
    return oracle


def _double_well(source: float = 1.0) -> CatalogEntry:
    spec = ProcessSpec.brownian(1, domain=_interval())
    G = 2.0 / (3.0 * math.sqrt(3.0))
    F = Nonlinearity(1, lambda x, y: y - y**3, G, False,
                     lambda r, x: np.full(len(x), _double_well_local(r)), "double_well")
    oracle = bvp_oracle(lambda u: u - u**3, lambda x: np.full_like(x, source),
                        lambda u: 1.0 - 3.0 * u**2)
    return CatalogEntry(
        "double-well", spec, F, MeasureSpec.densities(source), oracle, "bvp",
        {"n_paths": 4000, "dt": 1e-4, "mesh_points": 11, "tol_fix": 1e-4, "max_iters": 50,
         "bsde_paths": 4000, "bsde_horizon": 0.1},
        {"relative_sup_error": 0.05, "apriori_fraction": 0.05},
        "F(u) = u - u^3 (sign bound G = 2/(3 sqrt 3), not monotone), mu = c m on (0,1)",
        {"source": source})


def _double_well_local(r: float) -> float:
    # sup_{|y| <= r} |y - y^3|: interior max at y = 1/sqrt(3), else the endpoint
    cand = [abs(r - r**3)]
    if r >= 1 / math.sqrt(3):
        cand.append(2.0 / (3.0 * math.sqrt(3.0)))
    return max(cand)


def _ou_2d() -> CatalogEntry:
    drift = np.array([[-1.0, 0.0], [0.0, -2.0]])
    noise = np.array([[1.0, 1.0], [1.0, 1.0]])
    spec = ProcessSpec.ornstein_uhlenbeck(drift, noise)
    return CatalogEntry(
        "ou-2d", spec, Nonlinearity.zero(1), MeasureSpec.zero(1), None, "covariance",
        {"n_paths": 100_000, "dt": 0.01, "t": 1.0, "start": [0.0, 0.0]},
        {"z_max": 3.0},
        "2-d OU with drift diag(-1, -2) and noise [[1, 1], [1, 1]]; Cov(X_t) = Q_t",
        covariance=lambda t: ou_transition(drift, noise, t)[1])


def _stable_interval(alpha: float = 1.0) -> CatalogEntry:
    spec = ProcessSpec.alpha_stable(alpha, 1, domain=_interval(-1.0, 1.0))
    return CatalogEntry(
        "stable-interval", spec, _linear_F(-0.5, "minus_half_u"), MeasureSpec.densities(1.0),
        None, "seed-consistency",
        {"n_paths": 2000, "dt": 1e-3, "mesh_points": 9, "tol_fix": 1e-4, "max_iters": 50},
        {"z_max": 3.0},
        "symmetric alpha-stable process killed outside (-1, 1), F(u) = -u/2, mu = m",
        {"alpha": alpha})


def _dirac_interval(atom: float = 0.5) -> CatalogEntry:
    spec = ProcessSpec.brownian(1, domain=_interval())

    def green(x):
        x0 = x[:, 0]
        return (2.0 * np.minimum(x0, atom) * (1.0 - np.maximum(x0, atom)))[:, None]
    return CatalogEntry(
        "dirac-interval", spec, Nonlinearity.zero(1), MeasureSpec.dirac([(atom, 1.0)]), green,
        "closed-form", {"n_paths": 20_000, "dt": 1e-4, "mesh_points": 21},
        {"sup_error": 0.05},
        "killed Brownian motion on (0,1), F = 0, mu = delta_a; u = Green function G(x, a)",
        {"atom": atom})


_BUILDERS: dict[str, Callable[..., CatalogEntry]] = {
    "poisson-interval": _poisson_interval,
    "manufactured-sine": _manufactured_sine,
    "rotation-system": _rotation_system,
    "double-well": _double_well,
    "ou-2d": _ou_2d,
    "stable-interval": _stable_interval,
    "dirac-interval": _dirac_interval,
}


def list_entries() -> list[str]:
    return list(_BUILDERS)


def instantiate(name: str, **params) -> CatalogEntry:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ConfigError(f"unknown catalog entry {name!r}; known: {', '.join(_BUILDERS)}") from None
    try:
        return builder(**params)
    except TypeError as err:
        raise ConfigError(f"bad parameters for {name}: {err}") from None
